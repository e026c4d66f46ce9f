#include "sfr/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace sfr {

namespace {

struct Field {
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& s) {
  size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw IoError("config: malformed number '" + s + "'");
  return v;
}

// Ordered map keeps the saved file stable.
const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    const auto real = [&t](const std::string& name, auto member) {
      t[name] = {[member](const Config& c) { return fmt(c.*member); },
                 [member](Config& c, const std::string& s) { c.*member = parse_double(s); }};
    };
    const auto integer = [&t](const std::string& name, auto member) {
      t[name] = {[member](const Config& c) { return std::to_string(c.*member); },
                 [member](Config& c, const std::string& s) { c.*member = std::stoi(s); }};
    };
    (void)real;
    (void)integer;

    const auto f = [&t](const std::string& name, auto getter, auto setter) {
      t[name] = {getter, setter};
    };
#define SFR_REAL(name, expr)                              \
  f(name, [](const Config& c) { return fmt(c.expr); },    \
    [](Config& c, const std::string& s) { c.expr = parse_double(s); })
#define SFR_INT(name, expr)                                          \
  f(name, [](const Config& c) { return std::to_string(c.expr); },    \
    [](Config& c, const std::string& s) { c.expr = std::stoi(s); })
#define SFR_BOOL(name, expr)                                              \
  f(name, [](const Config& c) { return c.expr ? "true" : "false"; },      \
    [](Config& c, const std::string& s) {                                 \
      if (s != "true" && s != "false") throw IoError("config: bool expected for " name); \
      c.expr = (s == "true");                                             \
    })

    SFR_REAL("surfel.alpha_s", map.alpha_s);
    SFR_REAL("surfel.tau_o", map.tau_o);
    SFR_REAL("surfel.tau_d", map.tau_d);
    SFR_REAL("surfel.delta_s", map.delta_s);
    SFR_REAL("surfel.o_init", map.o_init);
    SFR_INT("surfel.init_stride", map.init_stride);
    SFR_REAL("surfel.cell_size", map.cell_size);
    SFR_INT("surfel.sh_order", map.sh_order);

    SFR_REAL("fusion.kappa_p", noise.kappa_p);
    SFR_REAL("fusion.kappa_n", noise.kappa_n);

    SFR_INT("render.tile_size", render.tile_size);
    SFR_REAL("render.near_plane", render.near_plane);

    SFR_REAL("optimizer.w_d", loss.w_d);
    SFR_REAL("optimizer.w_n", loss.w_n);
    SFR_REAL("optimizer.w_reg", loss.w_reg);
    SFR_REAL("optimizer.w_reg_n", loss.w_reg_n);
    SFR_REAL("optimizer.lr_p", optimizer.lr_p);
    SFR_REAL("optimizer.lr_r", optimizer.lr_r);
    SFR_REAL("optimizer.lr_s", optimizer.lr_s);
    SFR_REAL("optimizer.lr_o", optimizer.lr_o);
    SFR_REAL("optimizer.lr_c", optimizer.lr_c);
    SFR_INT("optimizer.n_batch", optimizer.n_batch);
    SFR_INT("optimizer.m", optimizer.m);

    SFR_REAL("tracking.fast_threshold", tracker.features.fast_threshold);
    SFR_INT("tracking.max_keypoints", tracker.features.max_keypoints);
    SFR_INT("tracking.match_radius", tracker.match_radius);
    SFR_REAL("tracking.ratio_test", tracker.ratio_test);
    SFR_INT("tracking.max_hamming", tracker.max_hamming);
    SFR_REAL("tracking.tau_huber", tracker.tau_huber);
    SFR_REAL("tracking.tau_inlier", tracker.tau_inlier);
    SFR_INT("tracking.min_inliers", tracker.min_inliers);
    SFR_INT("tracking.lm_iterations", tracker.lm_iterations);
    SFR_REAL("tracking.assoc_dist", tracker.assoc_dist);
    SFR_REAL("tracking.assoc_angle_deg", tracker.assoc_angle_deg);
    SFR_INT("tracking.assoc_floor", tracker.assoc_floor);
    SFR_REAL("tracking.lambda_photo", tracker.lambda_photo);
    SFR_REAL("tracking.tau_step", tracker.tau_step);
    SFR_INT("tracking.n_pyr", tracker.n_pyr);
    SFR_INT("tracking.l_pyr", tracker.l_pyr);
    SFR_REAL("tracking.t_k", tracker.t_k);
    SFR_REAL("tracking.theta_k_deg", tracker.theta_k_deg);

    SFR_REAL("meshing.voxel_size", meshing.voxel_size);
    SFR_REAL("meshing.truncation", meshing.truncation);
    SFR_INT("meshing.dilation_r", meshing.dilation_r);

    SFR_INT("run.threads", run.threads);
    SFR_INT("run.pyramid_levels", run.pyramid_levels);
    SFR_BOOL("run.bilateral_filter", run.bilateral_filter);
    SFR_REAL("run.tau_conf", run.tau_conf);
    SFR_INT("run.eval_sample_points", run.eval_sample_points);
    SFR_INT("run.optimize_every_keyframes", run.optimize_every_keyframes);
    t["run.seed"] = {
        [](const Config& c) { return std::to_string(c.run.seed); },
        [](Config& c, const std::string& s) { c.run.seed = std::stoull(s); }};

#undef SFR_REAL
#undef SFR_INT
#undef SFR_BOOL
    return t;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void Config::validate() const {
  if (map.alpha_s <= 0) throw PreconditionError("config: surfel.alpha_s must be > 0");
  if (map.o_init < 0 || map.o_init > 1)
    throw PreconditionError("config: surfel.o_init must be in [0,1]");
  if (map.init_stride < 1) throw PreconditionError("config: surfel.init_stride must be >= 1");
  if (noise.kappa_p <= 0 || noise.kappa_n <= 0)
    throw PreconditionError("config: fusion noise coefficients must be > 0");
  if (render.tile_size < 8) throw PreconditionError("config: render.tile_size must be >= 8");
  if (loss.w_d < 0 || loss.w_n < 0 || loss.w_reg < 0 || loss.w_reg_n < 0)
    throw PreconditionError("config: loss weights must be >= 0");
  if (optimizer.n_batch < 1) throw PreconditionError("config: optimizer.n_batch must be >= 1");
  if (optimizer.m < 0) throw PreconditionError("config: optimizer.m must be >= 0");
  if (tracker.l_pyr < 1) throw PreconditionError("config: tracking.l_pyr must be >= 1");
  if (tracker.n_pyr < 1) throw PreconditionError("config: tracking.n_pyr must be >= 1");
  if (meshing.voxel_size <= 0)
    throw PreconditionError("config: meshing.voxel_size must be > 0");
  if (meshing.truncation <= meshing.voxel_size / 2)
    throw PreconditionError("config: meshing.truncation too small for the voxel size");
  if (run.pyramid_levels < 1)
    throw PreconditionError("config: run.pyramid_levels must be >= 1");
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  Config cfg;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[' && s.back() == ']') {
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw IoError("config: expected key = value at " + path + ":" + std::to_string(line_no));
    const std::string key = section + "." + trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    auto it = fields().find(key);
    if (it == fields().end())
      throw IoError("config: unknown key '" + key + "' at " + path + ":" +
                    std::to_string(line_no));
    it->second.set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

void save_config(const Config& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("config: cannot write " + path);
  std::string section;
  for (const auto& [key, field] : fields()) {
    const size_t dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << "\n";
      out << "[" << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << field.get(cfg) << "\n";
  }
}

void apply_override(Config& cfg, const std::string& spec) {
  const size_t eq = spec.find('=');
  if (eq == std::string::npos) throw IoError("override must look like section.key=value");
  const std::string key = trim(spec.substr(0, eq));
  auto it = fields().find(key);
  if (it == fields().end()) throw IoError("override: unknown key '" + key + "'");
  it->second.set(cfg, trim(spec.substr(eq + 1)));
}

}  // namespace sfr
