#include "svrecon/config.hpp"

#include "svrecon/error.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace svr {

namespace {

using nlohmann::json;

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw InputError("unknown key '" + key + "' in " + where);
  }
}

json weights_json(const WeightSchedule& w) {
  return json{{"normal", w.normal},
              {"normal_breaks", w.normal_breaks},
              {"eikonal", w.eikonal},
              {"eikonal_end", w.eikonal_end},
              {"smooth", w.smooth},
              {"decay_period", w.decay_period},
              {"decay_steps", w.decay_steps},
              {"local_eikonal", w.local_eikonal},
              {"local_eikonal_window", w.local_eikonal_window},
              {"mask", w.mask},
              {"ray_eikonal", w.ray_eikonal},
              {"dmed", w.dmed},
              {"dmed_start", w.dmed_start},
              {"dmean", w.dmean},
              {"dmean_start", w.dmean_start}};
}

void apply_weights(const json& j, WeightSchedule& w, const std::string& origin) {
  check_keys(j, {"normal", "normal_breaks", "eikonal", "eikonal_end", "smooth", "decay_period", "decay_steps",
                 "local_eikonal", "local_eikonal_window", "mask", "ray_eikonal", "dmed", "dmed_start", "dmean",
                 "dmean_start"},
             origin + " (weights)");
  take(j, "normal", w.normal);
  take(j, "normal_breaks", w.normal_breaks);
  take(j, "eikonal", w.eikonal);
  take(j, "eikonal_end", w.eikonal_end);
  take(j, "smooth", w.smooth);
  take(j, "decay_period", w.decay_period);
  take(j, "decay_steps", w.decay_steps);
  take(j, "local_eikonal", w.local_eikonal);
  take(j, "local_eikonal_window", w.local_eikonal_window);
  take(j, "mask", w.mask);
  take(j, "ray_eikonal", w.ray_eikonal);
  take(j, "dmed", w.dmed);
  take(j, "dmed_start", w.dmed_start);
  take(j, "dmean", w.dmean);
  take(j, "dmean_start", w.dmean_start);
}

}  // namespace

TrainConfig train_config_from_json(const std::string& text, std::optional<Profile> profile,
                                   const std::string& origin) {
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw InputError("config must be a JSON object: " + origin);
    check_keys(j, {"profile", "iterations", "rays_per_batch", "lr_geo_scale", "lr_color", "beta1", "beta2",
                   "adam_eps", "prune_every", "subdivide_every", "level_schedule", "l_cap", "seed",
                   "regularizer_samples", "local_eikonal_probability", "kappa", "top_fraction", "stat_decay",
                   "ramp_rate", "initial_log_s", "background", "early_stop_transmittance",
                   "confidence_threshold", "weights"},
               origin);
    if (!profile) profile = j.contains("profile") ? parse_profile(j.at("profile").get<std::string>()) : Profile::synthetic;
    TrainConfig c = default_config(*profile);
    take(j, "iterations", c.iterations);
    take(j, "rays_per_batch", c.rays_per_batch);
    take(j, "lr_geo_scale", c.lr_geo_scale);
    take(j, "lr_color", c.lr_color);
    take(j, "beta1", c.beta1);
    take(j, "beta2", c.beta2);
    take(j, "adam_eps", c.adam_eps);
    take(j, "prune_every", c.prune_every);
    take(j, "subdivide_every", c.subdivide_every);
    if (j.contains("level_schedule")) {
      c.level_schedule.clear();
      for (const json& step : j.at("level_schedule")) {
        const auto pair = step.get<std::array<long, 2>>();
        c.level_schedule.push_back({pair[0], static_cast<int>(pair[1])});
      }
    }
    take(j, "l_cap", c.l_cap);
    take(j, "seed", c.seed);
    take(j, "regularizer_samples", c.regularizer_samples);
    take(j, "local_eikonal_probability", c.local_eikonal_probability);
    take(j, "kappa", c.kappa);
    take(j, "top_fraction", c.top_fraction);
    take(j, "stat_decay", c.stat_decay);
    take(j, "ramp_rate", c.ramp_rate);
    if (j.contains("initial_log_s") && !j.at("initial_log_s").is_null()) {
      c.initial_log_s = j.at("initial_log_s").get<double>();
    }
    if (j.contains("background")) {
      const auto b = j.at("background").get<std::array<double, 3>>();
      c.background = Vec3(b[0], b[1], b[2]);
    }
    take(j, "early_stop_transmittance", c.early_stop_transmittance);
    take(j, "confidence_threshold", c.confidence_threshold);
    if (j.contains("weights")) apply_weights(j.at("weights"), c.weights, origin);
    return c;
  } catch (const json::exception& e) {
    throw InputError(std::string(e.what()) + " in " + origin);
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string(e.what()) + " in " + origin);
  }
}

TrainConfig load_train_config(const std::string& path, std::optional<Profile> profile) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return train_config_from_json(ss.str(), profile, path);
}

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["profile"] = std::string(profile_name(c.profile));
  j["iterations"] = c.iterations;
  j["rays_per_batch"] = c.rays_per_batch;
  j["lr_geo_scale"] = c.lr_geo_scale;
  j["lr_color"] = c.lr_color;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_eps"] = c.adam_eps;
  j["prune_every"] = c.prune_every;
  j["subdivide_every"] = c.subdivide_every;
  j["level_schedule"] = json::array();
  for (const LevelStep& s : c.level_schedule) j["level_schedule"].push_back({s.iteration, s.level});
  j["l_cap"] = c.l_cap;
  j["seed"] = c.seed;
  j["regularizer_samples"] = c.regularizer_samples;
  j["local_eikonal_probability"] = c.local_eikonal_probability;
  j["kappa"] = c.kappa;
  j["top_fraction"] = c.top_fraction;
  j["stat_decay"] = c.stat_decay;
  j["ramp_rate"] = c.ramp_rate;
  j["initial_log_s"] = c.initial_log_s ? json(*c.initial_log_s) : json(nullptr);
  j["background"] = {c.background.x(), c.background.y(), c.background.z()};
  j["early_stop_transmittance"] = c.early_stop_transmittance;
  j["confidence_threshold"] = c.confidence_threshold;
  j["weights"] = weights_json(c.weights);
  return j.dump(2);
}

}  // namespace svr
