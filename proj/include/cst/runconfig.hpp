// JSON run configuration: schema validation (all violations reported, unknown
// keys rejected) and factories for the configured data functions. Defaults
// mirror the paper-style experiment: Omega = (-0.5, 0.5)^d, T = 1, Gaussian
// tracking target with sharpness 100 and radius 0.25, zero source.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cst/kkt.hpp"
#include "cst/model.hpp"
#include "cst/solver.hpp"

#include <json.hpp>

namespace cst {

struct TargetSpec {
  std::string type = "gaussian_track";  // gaussian_track | mms_linear | zero
  double amplitude = 1.0;
  double sharpness = 100.0;
  double radius = 0.25;
};

struct SourceSpec {
  std::string type = "zero";  // zero | expr-preset
  std::string name;           // preset name, e.g. mms_linear
};

struct OutputSpec {
  std::string dir = "out";
  std::vector<double> slice_times;
  int raster = 33;
};

struct RunConfig {
  int dim = 1;
  DomainSpec domain;
  std::vector<int> divisions;
  CarreauParams model;
  std::vector<double> rho_values;  // one entry for solve, descending list
  bool is_sweep = false;           // true when the config used rho_list
  TargetSpec target;
  SourceSpec source;
  NewtonConfig newton;
  LinearSolverConfig linear;
  OutputSpec output;

  ScalarFn make_target_fn() const;
  ScalarFn make_source_fn(double rho) const;
  nlohmann::ordered_json echo() const;  // canonical round-trippable form
};

struct ParseReport {
  std::optional<RunConfig> config;
  std::vector<std::string> errors;
  bool ok() const { return config.has_value() && errors.empty(); }
};

ParseReport parse_config(const std::string& path);
ParseReport parse_config_json(const nlohmann::json& doc);

}  // namespace cst
