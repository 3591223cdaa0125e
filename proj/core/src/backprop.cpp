#include "svrecon/trainer.hpp"

#include <stdexcept>

namespace svr {

std::vector<SegmentParamGrad> backprop_render(const OctreeState& octree, std::span<const RaySegment> segments,
                                              double s, const RenderUpstream& up) {
  const std::size_t n = segments.size();
  if (!up.g_weight.empty() && up.g_weight.size() != n) {
    throw std::invalid_argument("backprop_render: g_weight size mismatch");
  }
  std::vector<SegmentParamGrad> out(n);
  if (n == 0) return out;

  const SceneBounds& bounds = octree.bounds();
  const bool want_normal = up.g_normal.squaredNorm() > 0.0;
  std::vector<AlphaPartials> ap(n);
  std::vector<double> T(n), gw(n);
  double trans = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const RaySegment& seg = segments[i];
    if (seg.voxel >= octree.size()) throw std::logic_error("backprop_render: segment without a voxel");
    const Voxel& v = octree[seg.voxel];
    ap[i] = alpha_partials(seg.f_in, seg.f_out, s);
    T[i] = trans;
    const double w = trans * ap[i].alpha;
    const Vec3 c(v.color[0], v.color[1], v.color[2]);
    gw[i] = up.g_color.dot(c);
    if (!up.g_weight.empty()) gw[i] += up.g_weight[i];

    out[i].voxel = seg.voxel;
    for (int k = 0; k < 3; ++k) out[i].color[k] = w * up.g_color[k];

    if (want_normal) {
      const double h = v.size(bounds);
      const Vec3 g = grad_center(v.geo, h);
      const double norm = g.norm();
      if (norm > kDegenerateGradient) {
        const Vec3 nrm = g / norm;
        gw[i] += up.g_normal.dot(nrm);
        const Vec3 gn = w * up.g_normal;
        const Vec3 dg = (gn - nrm * nrm.dot(gn)) / norm;
        const auto jac = grad_center_jacobian(h);
        for (int c2 = 0; c2 < 8; ++c2) out[i].geo[c2] += dg.dot(jac[c2]);
      }
    }
    trans *= 1.0 - ap[i].alpha;
  }

  // dL/dalpha_k = T_k (gw_k - A_k - g_trans P_k), with A_k the downstream
  // weight coupling and P_k the transmittance past k.
  double A = 0.0;
  double P = 1.0;
  for (std::size_t r = n; r-- > 0;) {
    const double a = ap[r].alpha;
    const double d_alpha = T[r] * (gw[r] - A - up.g_trans * P);
    const RaySegment& seg = segments[r];
    for (int c = 0; c < 8; ++c) {
      out[r].geo[c] += d_alpha * (ap[r].d_in * seg.w_in[c] + ap[r].d_out * seg.w_out[c]);
    }
    A = gw[r] * a + (1.0 - a) * A;
    P *= 1.0 - a;
  }
  return out;
}

}  // namespace svr
