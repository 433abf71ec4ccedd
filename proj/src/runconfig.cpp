#include "cst/runconfig.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "cst/verify.hpp"

namespace cst {
namespace {

using nlohmann::json;

// Collects schema violations instead of stopping at the first one.
struct Checker {
  std::vector<std::string>& errors;

  void fail(const std::string& msg) { errors.push_back(msg); }

  bool require_object(const json& j, const std::string& where) {
    if (j.is_object()) return true;
    fail(where + ": expected an object");
    return false;
  }

  void known_keys(const json& j, const std::string& where,
                  const std::set<std::string>& allowed) {
    if (!j.is_object()) return;
    for (const auto& [key, _] : j.items())
      if (!allowed.contains(key)) fail(where + ": unknown key '" + key + "'");
  }

  std::optional<double> number(const json& j, const std::string& where) {
    if (j.is_number()) return j.get<double>();
    fail(where + ": expected a number");
    return std::nullopt;
  }

  std::optional<int> integer(const json& j, const std::string& where) {
    if (j.is_number_integer()) return j.get<int>();
    fail(where + ": expected an integer");
    return std::nullopt;
  }

  std::optional<std::string> string(const json& j, const std::string& where) {
    if (j.is_string()) return j.get<std::string>();
    fail(where + ": expected a string");
    return std::nullopt;
  }
};

}  // namespace

ScalarFn RunConfig::make_target_fn() const {
  const int d = dim;
  if (target.type == "zero") return nullptr;
  if (target.type == "mms_linear") {
    MmsLinearKkt mms{d, rho_values.front()};
    return [mms](std::span<const double> xt) { return mms.desired_state(xt); };
  }
  // gaussian_track: moving-center Gaussian; the center follows
  // (radius sin(t pi), radius cos(t pi)) in the first min(d,2) coordinates
  // and t in the third when d = 3.
  const double amp = target.amplitude;
  const double sharp = target.sharpness;
  const double rad = target.radius;
  return [d, amp, sharp, rad](std::span<const double> xt) {
    const double t = xt[d];
    std::array<double, 3> center{};
    center[0] = rad * std::sin(t * std::numbers::pi);
    if (d >= 2) center[1] = rad * std::cos(t * std::numbers::pi);
    if (d >= 3) center[2] = t;
    double r2 = 0.0;
    for (int k = 0; k < d; ++k)
      r2 += (xt[k] - center[k]) * (xt[k] - center[k]);
    return amp * std::exp(-sharp * r2);
  };
}

ScalarFn RunConfig::make_source_fn(double rho) const {
  if (source.type == "zero") return nullptr;
  if (source.name == "mms_linear") {
    MmsLinearKkt mms{dim, rho};
    return [mms](std::span<const double> xt) { return mms.source(xt); };
  }
  throw Error("unknown source preset: " + source.name);
}

nlohmann::ordered_json RunConfig::echo() const {
  nlohmann::ordered_json j;
  j["dim"] = dim;
  j["domain"]["lower"] =
      std::vector<double>(domain.lower.begin(), domain.lower.begin() + dim);
  j["domain"]["upper"] =
      std::vector<double>(domain.upper.begin(), domain.upper.begin() + dim);
  j["domain"]["T"] = domain.final_time;
  j["mesh"]["divisions"] = divisions;
  j["model"]["n"] = model.n;
  j["model"]["c"] = model.c;
  if (is_sweep)
    j["rho_list"] = rho_values;
  else
    j["rho"] = rho_values.front();
  j["target"]["type"] = target.type;
  if (target.type == "gaussian_track") {
    j["target"]["amplitude"] = target.amplitude;
    j["target"]["sharpness"] = target.sharpness;
    j["target"]["radius"] = target.radius;
  }
  j["source"]["type"] = source.type;
  if (source.type == "expr-preset") j["source"]["name"] = source.name;
  j["newton"]["abs_tol"] = newton.abs_tol;
  j["newton"]["rel_tol"] = newton.rel_tol;
  j["newton"]["max_iters"] = newton.max_iters;
  j["linear"]["method"] =
      linear.method == LinearMethod::kDirect ? "direct" : "krylov";
  j["linear"]["tol"] = linear.rel_residual_tol;
  j["linear"]["preconditioner"] =
      linear.preconditioner == Preconditioner::kNone
          ? "none"
          : (linear.preconditioner == Preconditioner::kJacobi
                 ? "jacobi"
                 : "block_diagonal");
  j["output"]["dir"] = output.dir;
  j["output"]["slices"] = output.slice_times;
  j["output"]["raster"] = output.raster;
  return j;
}

ParseReport parse_config(const std::string& path) {
  std::ifstream in(path);
  ParseReport report;
  if (!in) {
    report.errors.push_back("cannot open config file: " + path);
    return report;
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& err) {
    report.errors.push_back(std::string("malformed JSON: ") + err.what());
    return report;
  }
  return parse_config_json(doc);
}

ParseReport parse_config_json(const nlohmann::json& doc) {
  ParseReport report;
  Checker check{report.errors};
  RunConfig cfg;

  if (!check.require_object(doc, "config")) return report;
  check.known_keys(doc, "config",
                   {"dim", "domain", "mesh", "model", "rho", "rho_list",
                    "target", "source", "newton", "linear", "output"});

  if (!doc.contains("dim")) {
    check.fail("config: missing required key 'dim'");
  } else if (auto d = check.integer(doc["dim"], "dim")) {
    if (*d < 1 || *d > 3)
      check.fail("dim: must be 1, 2 or 3, got " + std::to_string(*d));
    else
      cfg.dim = *d;
  }
  const int d = cfg.dim;

  cfg.domain.spatial_dim = d;
  for (int k = 0; k < d; ++k) {
    cfg.domain.lower[k] = -0.5;
    cfg.domain.upper[k] = 0.5;
  }
  cfg.domain.final_time = 1.0;
  if (doc.contains("domain")) {
    const json& jd = doc["domain"];
    if (check.require_object(jd, "domain")) {
      check.known_keys(jd, "domain", {"lower", "upper", "T"});
      for (const char* key : {"lower", "upper"}) {
        if (!jd.contains(key)) continue;
        const json& arr = jd[key];
        if (!arr.is_array() || static_cast<int>(arr.size()) != d) {
          check.fail(std::string("domain.") + key + ": expected an array of " +
                     std::to_string(d) + " numbers");
          continue;
        }
        for (int k = 0; k < d; ++k)
          if (auto v = check.number(arr[k], std::string("domain.") + key)) {
            (key[0] == 'l' ? cfg.domain.lower : cfg.domain.upper)[k] = *v;
          }
      }
      if (jd.contains("T")) {
        if (auto v = check.number(jd["T"], "domain.T")) {
          if (*v <= 0.0)
            check.fail("domain.T: must be > 0");
          else
            cfg.domain.final_time = *v;
        }
      }
      for (int k = 0; k < d; ++k)
        if (!(cfg.domain.lower[k] < cfg.domain.upper[k]))
          check.fail("domain: lower[" + std::to_string(k) +
                     "] must be < upper[" + std::to_string(k) + "]");
    }
  }

  if (!doc.contains("mesh")) {
    check.fail("config: missing required key 'mesh'");
  } else if (check.require_object(doc["mesh"], "mesh")) {
    check.known_keys(doc["mesh"], "mesh", {"divisions"});
    if (!doc["mesh"].contains("divisions")) {
      check.fail("mesh: missing required key 'divisions'");
    } else {
      const json& arr = doc["mesh"]["divisions"];
      const int expect = d + 1;
      if (!arr.is_array() ||
          (static_cast<int>(arr.size()) != expect && arr.size() != 1)) {
        check.fail("mesh.divisions: expected an array of " +
                   std::to_string(expect) + " positive integers");
      } else {
        for (std::size_t k = 0; k < arr.size(); ++k) {
          if (auto m = check.integer(arr[k], "mesh.divisions")) {
            if (*m < 1)
              check.fail("mesh.divisions: entries must be >= 1");
            else
              cfg.divisions.push_back(*m);
          }
        }
        if (cfg.divisions.size() == 1)
          cfg.divisions.assign(expect, cfg.divisions.front());
      }
    }
  }

  if (doc.contains("model") && check.require_object(doc["model"], "model")) {
    check.known_keys(doc["model"], "model", {"n", "c"});
    if (doc["model"].contains("n"))
      if (auto v = check.number(doc["model"]["n"], "model.n")) {
        if (*v <= 0.0)
          check.fail("model.n: must be > 0");
        else
          cfg.model.n = *v;
      }
    if (doc["model"].contains("c"))
      if (auto v = check.number(doc["model"]["c"], "model.c")) {
        if (*v < 0.0)
          check.fail("model.c: must be >= 0");
        else
          cfg.model.c = *v;
      }
  }

  const bool has_rho = doc.contains("rho");
  const bool has_list = doc.contains("rho_list");
  if (has_rho == has_list) {
    check.fail("config: exactly one of 'rho' or 'rho_list' is required");
  } else if (has_rho) {
    if (auto v = check.number(doc["rho"], "rho")) {
      if (*v <= 0.0)
        check.fail("rho: must be > 0");
      else
        cfg.rho_values = {*v};
    }
  } else {
    const json& arr = doc["rho_list"];
    if (!arr.is_array() || arr.empty()) {
      check.fail("rho_list: expected a non-empty array");
    } else {
      for (std::size_t k = 0; k < arr.size(); ++k)
        if (auto v = check.number(arr[k], "rho_list")) {
          if (*v <= 0.0)
            check.fail("rho_list: entries must be > 0");
          else
            cfg.rho_values.push_back(*v);
        }
      for (std::size_t k = 1; k < cfg.rho_values.size(); ++k)
        if (!(cfg.rho_values[k] < cfg.rho_values[k - 1]))
          check.fail("rho_list: entries must be strictly descending");
      cfg.is_sweep = true;
    }
  }

  if (doc.contains("target") &&
      check.require_object(doc["target"], "target")) {
    const json& jt = doc["target"];
    check.known_keys(jt, "target",
                     {"type", "amplitude", "sharpness", "radius"});
    if (jt.contains("type"))
      if (auto s = check.string(jt["type"], "target.type")) {
        if (*s != "gaussian_track" && *s != "mms_linear" && *s != "zero")
          check.fail("target.type: unknown type '" + *s + "'");
        else
          cfg.target.type = *s;
      }
    for (const char* key : {"amplitude", "sharpness", "radius"}) {
      if (!jt.contains(key)) continue;
      if (cfg.target.type != "gaussian_track")
        check.fail(std::string("target.") + key +
                   ": only valid for type gaussian_track");
      else if (auto v = check.number(jt[key], std::string("target.") + key)) {
        if (key[0] == 'a') cfg.target.amplitude = *v;
        if (key[0] == 's') cfg.target.sharpness = *v;
        if (key[0] == 'r') cfg.target.radius = *v;
      }
    }
  }

  if (doc.contains("source") &&
      check.require_object(doc["source"], "source")) {
    const json& js = doc["source"];
    check.known_keys(js, "source", {"type", "name"});
    if (js.contains("type"))
      if (auto s = check.string(js["type"], "source.type")) {
        if (*s != "zero" && *s != "expr-preset")
          check.fail("source.type: unknown type '" + *s + "'");
        else
          cfg.source.type = *s;
      }
    if (cfg.source.type == "expr-preset") {
      if (!js.contains("name"))
        check.fail("source: expr-preset requires 'name'");
      else if (auto s = check.string(js["name"], "source.name")) {
        if (*s != "mms_linear")
          check.fail("source.name: unknown preset '" + *s + "'");
        else
          cfg.source.name = *s;
      }
    } else if (js.contains("name")) {
      check.fail("source.name: only valid for type expr-preset");
    }
  }

  if (doc.contains("newton") &&
      check.require_object(doc["newton"], "newton")) {
    const json& jn = doc["newton"];
    check.known_keys(jn, "newton", {"abs_tol", "rel_tol", "max_iters"});
    if (jn.contains("abs_tol"))
      if (auto v = check.number(jn["abs_tol"], "newton.abs_tol")) {
        if (*v <= 0.0)
          check.fail("newton.abs_tol: must be > 0");
        else
          cfg.newton.abs_tol = *v;
      }
    if (jn.contains("rel_tol"))
      if (auto v = check.number(jn["rel_tol"], "newton.rel_tol")) {
        if (*v <= 0.0)
          check.fail("newton.rel_tol: must be > 0");
        else
          cfg.newton.rel_tol = *v;
      }
    if (jn.contains("max_iters"))
      if (auto v = check.integer(jn["max_iters"], "newton.max_iters")) {
        if (*v < 1)
          check.fail("newton.max_iters: must be >= 1");
        else
          cfg.newton.max_iters = *v;
      }
  }

  if (doc.contains("linear") &&
      check.require_object(doc["linear"], "linear")) {
    const json& jl = doc["linear"];
    check.known_keys(jl, "linear",
                     {"method", "tol", "preconditioner", "max_iters",
                      "restart"});
    if (jl.contains("method"))
      if (auto s = check.string(jl["method"], "linear.method")) {
        if (*s == "direct")
          cfg.linear.method = LinearMethod::kDirect;
        else if (*s == "krylov")
          cfg.linear.method = LinearMethod::kKrylov;
        else
          check.fail("linear.method: must be 'direct' or 'krylov'");
      }
    if (jl.contains("tol"))
      if (auto v = check.number(jl["tol"], "linear.tol")) {
        if (*v <= 0.0)
          check.fail("linear.tol: must be > 0");
        else
          cfg.linear.rel_residual_tol = *v;
      }
    if (jl.contains("max_iters"))
      if (auto v = check.integer(jl["max_iters"], "linear.max_iters")) {
        if (*v < 1)
          check.fail("linear.max_iters: must be >= 1");
        else
          cfg.linear.max_krylov_iters = *v;
      }
    if (jl.contains("restart"))
      if (auto v = check.integer(jl["restart"], "linear.restart")) {
        if (*v < 1)
          check.fail("linear.restart: must be >= 1");
        else
          cfg.linear.restart = *v;
      }
    if (jl.contains("preconditioner"))
      if (auto s = check.string(jl["preconditioner"],
                                "linear.preconditioner")) {
        if (*s == "none")
          cfg.linear.preconditioner = Preconditioner::kNone;
        else if (*s == "jacobi")
          cfg.linear.preconditioner = Preconditioner::kJacobi;
        else if (*s == "block_diagonal")
          cfg.linear.preconditioner = Preconditioner::kBlockDiagonal;
        else
          check.fail("linear.preconditioner: must be none, jacobi or "
                     "block_diagonal");
      }
  }

  if (doc.contains("output") &&
      check.require_object(doc["output"], "output")) {
    const json& jo = doc["output"];
    check.known_keys(jo, "output", {"dir", "slices", "raster"});
    if (jo.contains("dir"))
      if (auto s = check.string(jo["dir"], "output.dir")) cfg.output.dir = *s;
    if (jo.contains("slices")) {
      if (!jo["slices"].is_array())
        check.fail("output.slices: expected an array of times");
      else
        for (const auto& t : jo["slices"])
          if (auto v = check.number(t, "output.slices"))
            cfg.output.slice_times.push_back(*v);
    }
    if (jo.contains("raster"))
      if (auto v = check.integer(jo["raster"], "output.raster")) {
        if (*v < 2)
          check.fail("output.raster: must be >= 2");
        else
          cfg.output.raster = *v;
      }
  }

  for (double t : cfg.output.slice_times)
    if (t < 0.0 || t > cfg.domain.final_time)
      check.fail("output.slices: time " + format_double(t) +
                 " outside [0, T]");

  if (cfg.target.type == "mms_linear" || cfg.source.name == "mms_linear") {
    for (int k = 0; k < d; ++k)
      if (cfg.domain.lower[k] != 0.0 || cfg.domain.upper[k] != 1.0)
        { check.fail("mms_linear data requires domain (0,1)^d"); break; }
    if (cfg.domain.final_time != 1.0)
      check.fail("mms_linear data requires T = 1");
  }

  if (!report.errors.empty()) return report;
  report.config = std::move(cfg);
  return report;
}

}  // namespace cst
