#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ouro/grid.hpp"
#include "ouro/rng.hpp"
#include "ouro/scene.hpp"
#include "ouro/toy_denoiser.hpp"

namespace ouro {

enum class TailMode { coherent, gaussian };
enum class DenoiserKind { toy, analytic };

struct RunConfig {
  std::uint64_t seed = 0;
  long n_frames = 128;
  int T = 64;
  int f = 16;
  double beta_start = 1e-4;
  double beta_end = 2e-2;

  TailMode tail_mode = TailMode::coherent;
  double low_pass_threshold = 0.25;

  bool sacfa_enabled = true;
  int sacfa_frame_span = 16;

  bool guidance_enabled = true;
  double gamma0 = 0.05;
  double lambda = 0.98;
  int head_span = 16;
  int tail_span = 16;
  int bank_rows = 16;

  DenoiserKind denoiser = DenoiserKind::toy;
  ToyConfig model;
  SceneSpec scene = default_scene();
  std::vector<int> subject_ids{1};

  std::string output_dir = "out";
  std::string run_id = "run";

  static SceneSpec default_scene() {
    SceneSpec s;
    s.shape = Shape{4, 32, 32};
    SubjectSpec subj;
    subj.id = 1;
    subj.radius = 6.0;
    subj.position[0] = 12.0;
    subj.position[1] = 10.0;
    subj.velocity[0] = 0.125;
    subj.velocity[1] = 0.25;
    subj.amplitude = 1.5;
    s.subjects.push_back(subj);
    return s;
  }
};

using Json = nlohmann::json;

inline const char* to_string(TailMode m) { return m == TailMode::coherent ? "coherent" : "gaussian"; }
inline const char* to_string(DenoiserKind k) { return k == DenoiserKind::toy ? "toy" : "analytic"; }

inline void validate(const RunConfig& c) {
  if (c.T < 2) throw ConfigError("T", "must be at least 2");
  if (c.f < 1 || c.f > c.T || c.T % c.f != 0) throw ConfigError("f", "must divide T");
  if (c.n_frames < 1) throw ConfigError("n_frames", "must be at least 1");
  if (!(c.low_pass_threshold >= 0.0)) throw ConfigError("tail.low_pass_threshold", "must be >= 0");
  if (c.sacfa_frame_span < 1 || c.sacfa_frame_span > c.T) throw ConfigError("sacfa.frame_span", "must lie in [1,T]");
  if (!(c.gamma0 >= 0.0)) throw ConfigError("guidance.gamma0", "must be >= 0");
  if (!(c.lambda >= 0.0 && c.lambda <= 1.0)) throw ConfigError("guidance.lambda", "must lie in [0,1]");
  if (c.head_span < 1 || c.head_span > c.T) throw ConfigError("guidance.head_span", "must lie in [1,T]");
  if (c.tail_span < 0 || c.tail_span > c.T) throw ConfigError("guidance.tail_span", "must lie in [0,T]");
  if (c.bank_rows < 1) throw ConfigError("guidance.bank_rows", "must be positive");
  if (c.model.channels != c.scene.shape.c) throw ConfigError("scene.channels", "must match the model channels");
  if (c.scene.shape.h % c.model.patch != 0 || c.scene.shape.w % c.model.patch != 0) {
    throw ConfigError("scene.height", "latent size must be a multiple of model.patch");
  }
  validate_scene(c.scene);
}

namespace detail {

// Reads a JSON object while rejecting keys the schema does not name.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(path_of(""), "expected an object");
  }

  template <class T>
  void get(const std::string& key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_of(key), "wrong value type");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const Json& at(const std::string& key) const { return j_.at(key); }
  std::string path_of(const std::string& key) const {
    if (prefix_.empty()) return key;
    return key.empty() ? prefix_ : prefix_ + "." + key;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(path_of(k), "unknown configuration key");
    }
  }

 private:
  const Json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

inline void read_pair(ObjectReader& r, const std::string& key, double (&dst)[2]) {
  if (!r.has(key)) return;
  const Json& v = r.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ConfigError(r.path_of(key), "expected [y, x]");
  }
  dst[0] = v[0].get<double>();
  dst[1] = v[1].get<double>();
}

}  // namespace detail

inline RunConfig config_from_json(const Json& j, RunConfig c = {}) {
  detail::ObjectReader top(j, "");
  top.get("seed", c.seed);
  top.get("n_frames", c.n_frames);
  top.get("T", c.T);
  top.get("f", c.f);
  top.get("output_dir", c.output_dir);
  top.get("run_id", c.run_id);
  if (top.has("denoiser")) {
    std::string d;
    top.get("denoiser", d);
    if (d == "toy") c.denoiser = DenoiserKind::toy;
    else if (d == "analytic") c.denoiser = DenoiserKind::analytic;
    else throw ConfigError("denoiser", "expected \"toy\" or \"analytic\"");
  }
  if (top.has("schedule")) {
    detail::ObjectReader r(top.at("schedule"), "schedule");
    r.get("beta_start", c.beta_start);
    r.get("beta_end", c.beta_end);
    r.finish();
  }
  if (top.has("tail")) {
    detail::ObjectReader r(top.at("tail"), "tail");
    r.get("low_pass_threshold", c.low_pass_threshold);
    if (r.has("mode")) {
      std::string m;
      r.get("mode", m);
      if (m == "coherent") c.tail_mode = TailMode::coherent;
      else if (m == "gaussian") c.tail_mode = TailMode::gaussian;
      else throw ConfigError("tail.mode", "expected \"coherent\" or \"gaussian\"");
    }
    r.finish();
  }
  if (top.has("sacfa")) {
    detail::ObjectReader r(top.at("sacfa"), "sacfa");
    r.get("enabled", c.sacfa_enabled);
    r.get("frame_span", c.sacfa_frame_span);
    r.get("capture_sites", c.model.capture_sites);
    r.finish();
  }
  if (top.has("guidance")) {
    detail::ObjectReader r(top.at("guidance"), "guidance");
    r.get("enabled", c.guidance_enabled);
    r.get("gamma0", c.gamma0);
    r.get("lambda", c.lambda);
    r.get("head_span", c.head_span);
    r.get("tail_span", c.tail_span);
    r.get("bank_rows", c.bank_rows);
    r.finish();
  }
  if (top.has("model")) {
    detail::ObjectReader r(top.at("model"), "model");
    r.get("token_width", c.model.token_width);
    r.get("patch", c.model.patch);
    r.get("residual_scale", c.model.residual_scale);
    r.get("time_embed_scale", c.model.time_embed_scale);
    r.get("saliency", c.model.saliency);
    r.finish();
  }
  top.get("subject_ids", c.subject_ids);
  if (top.has("scene")) {
    detail::ObjectReader r(top.at("scene"), "scene");
    r.get("channels", c.scene.shape.c);
    r.get("height", c.scene.shape.h);
    r.get("width", c.scene.shape.w);
    r.get("background", c.scene.background);
    r.get("sigma_d", c.scene.sigma_d);
    if (r.has("subjects")) {
      const Json& arr = r.at("subjects");
      if (!arr.is_array()) throw ConfigError("scene.subjects", "expected an array");
      c.scene.subjects.clear();
      for (const auto& item : arr) {
        detail::ObjectReader s(item, "scene.subjects");
        SubjectSpec subj;
        s.get("id", subj.id);
        s.get("radius", subj.radius);
        s.get("amplitude", subj.amplitude);
        detail::read_pair(s, "position", subj.position);
        detail::read_pair(s, "velocity", subj.velocity);
        s.finish();
        c.scene.subjects.push_back(subj);
      }
    }
    r.finish();
  }
  top.finish();
  c.model.channels = c.scene.shape.c;
  c.scene.seed = c.seed;
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config", path + ": " + e.what());
  }
  return config_from_json(j);
}

inline Json config_to_json(const RunConfig& c) {
  Json subjects = Json::array();
  for (const auto& s : c.scene.subjects) {
    subjects.push_back({{"id", s.id},
                        {"radius", s.radius},
                        {"amplitude", s.amplitude},
                        {"position", {s.position[0], s.position[1]}},
                        {"velocity", {s.velocity[0], s.velocity[1]}}});
  }
  return Json{
      {"seed", c.seed},
      {"n_frames", c.n_frames},
      {"T", c.T},
      {"f", c.f},
      {"denoiser", to_string(c.denoiser)},
      {"output_dir", c.output_dir},
      {"run_id", c.run_id},
      {"schedule", {{"beta_start", c.beta_start}, {"beta_end", c.beta_end}}},
      {"tail", {{"mode", to_string(c.tail_mode)}, {"low_pass_threshold", c.low_pass_threshold}}},
      {"sacfa",
       {{"enabled", c.sacfa_enabled}, {"frame_span", c.sacfa_frame_span}, {"capture_sites", c.model.capture_sites}}},
      {"guidance",
       {{"enabled", c.guidance_enabled},
        {"gamma0", c.gamma0},
        {"lambda", c.lambda},
        {"head_span", c.head_span},
        {"tail_span", c.tail_span},
        {"bank_rows", c.bank_rows}}},
      {"model",
       {{"token_width", c.model.token_width},
        {"patch", c.model.patch},
        {"residual_scale", c.model.residual_scale},
        {"time_embed_scale", c.model.time_embed_scale},
        {"saliency", c.model.saliency}}},
      {"subject_ids", c.subject_ids},
      {"scene",
       {{"channels", c.scene.shape.c},
        {"height", c.scene.shape.h},
        {"width", c.scene.shape.w},
        {"background", c.scene.background},
        {"sigma_d", c.scene.sigma_d},
        {"subjects", subjects}}},
  };
}

// Hash of everything that affects the generated frames (output paths excluded).
inline std::string config_hash(const RunConfig& c) {
  Json j = config_to_json(c);
  j.erase("output_dir");
  j.erase("run_id");
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << fnv1a(j.dump());
  return os.str();
}

}  // namespace ouro
