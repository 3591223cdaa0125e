#include "svrecon/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace svr {

Profile parse_profile(std::string_view name) {
  if (name == "dtu") return Profile::dtu;
  if (name == "tnt") return Profile::tnt;
  if (name == "synthetic") return Profile::synthetic;
  if (name == "baseline") return Profile::baseline;
  throw std::invalid_argument("unknown profile: " + std::string(name));
}

std::string_view profile_name(Profile p) {
  switch (p) {
    case Profile::dtu: return "dtu";
    case Profile::tnt: return "tnt";
    case Profile::synthetic: return "synthetic";
    case Profile::baseline: return "baseline";
  }
  return "unknown";
}

double LossReport::total() const {
  const LossWeights& w = weights;
  return w.photo * photo + w.normal * normal + w.eikonal * eikonal + w.local_eikonal * local_eikonal +
         w.smooth * smooth + w.mask * mask + w.ray_eikonal * ray_eikonal + w.dmean * dmean + w.dmed * dmed;
}

namespace {

double decay(long tau, long period, long max_steps) {
  const long steps = std::min(tau / period, max_steps);
  return std::pow(0.25, static_cast<double>(steps));
}

}  // namespace

WeightSchedule schedule_for(Profile profile) {
  WeightSchedule w;
  switch (profile) {
    case Profile::dtu:
      w.normal = {0.10, 0.01, 0.0};
      w.normal_breaks = {4000, 6000};
      w.local_eikonal_window = {6000, 8000};
      w.mask = 1.0;
      break;
    case Profile::tnt:
      w.normal = {0.01, 0.005, 0.0};
      w.normal_breaks = {4000, 8000};
      w.local_eikonal_window = {6000, 10000};
      w.mask = 0.0;
      break;
    case Profile::synthetic:
      // Desk-scale: 2000 iterations, levels 6 -> 7 at 1000.
      w.normal = {0.05, 0.01, 0.0};
      w.normal_breaks = {1000, 1500};
      w.eikonal = 1e-4;
      w.eikonal_end = 1500;
      w.smooth = 1e-7;
      w.decay_period = 1000;
      w.decay_steps = 1;
      w.local_eikonal = 1e-5;
      w.local_eikonal_window = {1500, 2000};
      w.mask = 1.0;
      w.dmed_start = 250;
      w.dmean_start = 500;
      break;
    case Profile::baseline:
      w.normal = {0.0, 0.0, 0.0};
      w.eikonal = 0.0;
      w.smooth = 0.0;
      w.local_eikonal = 0.0;
      w.mask = 0.0;
      w.ray_eikonal = 1e-3;
      break;
  }
  return w;
}

LossWeights weight_schedule(long tau, const WeightSchedule& s) {
  if (tau < 0) throw std::invalid_argument("weight_schedule: negative iteration");
  if (s.decay_period <= 0) throw std::invalid_argument("weight_schedule: decay period must be > 0");
  LossWeights w;
  w.normal = tau < s.normal_breaks[0] ? s.normal[0] : (tau < s.normal_breaks[1] ? s.normal[1] : s.normal[2]);
  const double d = decay(tau, s.decay_period, s.decay_steps);
  w.eikonal = tau < s.eikonal_end ? s.eikonal * d : 0.0;
  w.smooth = s.smooth * d;
  w.local_eikonal =
      (tau >= s.local_eikonal_window[0] && tau <= s.local_eikonal_window[1]) ? s.local_eikonal : 0.0;
  w.mask = s.mask;
  w.ray_eikonal = s.ray_eikonal;
  w.dmed = tau >= s.dmed_start ? s.dmed : 0.0;
  w.dmean = tau >= s.dmean_start ? s.dmean : 0.0;
  return w;
}

LossWeights weight_schedule(long tau, Profile profile) { return weight_schedule(tau, schedule_for(profile)); }

}  // namespace svr
