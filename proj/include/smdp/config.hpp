/*
 * config.hpp
 *
 * Project configuration: a single JSON file describing the network (either
 * generated from a parametric family or loaded from an explicit network
 * file), grid parameters, certificate source, bound query, synthesis and
 * simulation settings. See docs/config-schema.md for the format.
 */

#ifndef SMDP_CONFIG_HPP_
#define SMDP_CONFIG_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "smdp/certificates.hpp"
#include "smdp/model.hpp"

namespace smdp {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridConfig {
  double delta = 0.1;                       /* state discretization target */
  std::optional<double> input_delta;        /* default: same as delta */
  std::vector<double> delta_per_subsystem;  /* optional per-subsystem override */
  std::vector<double> input_delta_per_subsystem;
  bool matched_io = true;
  double memory_cap_gb = 4.0;
  double window_sigmas = 8.0;
  int export_rows = 0;  /* debug: rows of the kernel to dump as CSV */

  double delta_for(int subsystem) const {
    const auto i = static_cast<std::size_t>(subsystem);
    return i < delta_per_subsystem.size() ? delta_per_subsystem[i] : delta;
  }
  double input_delta_for(int subsystem) const {
    const auto i = static_cast<std::size_t>(subsystem);
    if (i < input_delta_per_subsystem.size()) return input_delta_per_subsystem[i];
    return input_delta.value_or(delta_for(subsystem));
  }
};

struct CertificateConfig {
  std::string source = "derive";  /* "paper" | "derive" | "file" */
  std::filesystem::path path;     /* for source == "file" */
  std::vector<ModeCertificate> modes;
  double epsilon = 1.75;
  std::optional<int> dwell_time;
  std::optional<double> mu;       /* paper-source override */
  std::optional<double> pi_tilde, delta_c;
  double kappa_ceiling = 0.99;
  bool common_lyapunov = false;
  /* paper-source max-form constants */
  double kappa = 0.99;
  Kinf rho_int = Kinf::zero();
  double psi_coeff = 0.0;
  Kinf alpha = Kinf(1.0, 2.0);
  double lambda_bar = 1.1;
  double delta_f = 0.05;
  int validation_tuples = 0;      /* 0 disables the empirical check in certify */
  int validation_inner = 200;
};

struct BoundConfig {
  double eps = 1.0;
  int horizon = 10;
  double v0 = 0.0;
  std::vector<double> deltas;  /* sweep for the closeness and memory tables */
};

struct SynthesisConfig {
  Vector safe_lb, safe_ub;  /* empty: the full state box */
  int horizon = 10;
};

struct SimulationConfig {
  int runs = 1000;
  int horizon = 10;
  std::uint64_t seed = 1;
  double eps = 1.0;
  Vector initial_state;  /* per-subsystem state, replicated across the network */
  int initial_mode = 0;
  int keep_paths = 3;
};

struct ProjectConfig {
  NetworkSpec network;
  bool homogeneous = false;  /* identical subsystems: share abstraction and policy */
  GridConfig grid;
  CertificateConfig certificates;
  BoundConfig bound;
  SynthesisConfig synthesis;
  SimulationConfig simulation;
  std::filesystem::path output_dir = "out";

  static ProjectConfig load(const std::filesystem::path& path);
};

/* explicit network file (subsystem matrices + connections) */
NetworkSpec load_network_json(const std::filesystem::path& path);

/* ring of identical scalar cells: cell i feeds cell i+1 */
NetworkSpec make_traffic_ring(int cells, double flow_ratio, double exit_ratio,
                              const std::vector<double>& entry_per_mode, double noise_sigma,
                              double state_lb, double state_ub, int dwell_time);

/* fully connected network of identical nonlinear subsystems */
NetworkSpec make_nonlinear_full(int subsystems, const std::vector<Matrix>& A_modes,
                                const std::vector<Vector>& b_modes, const Matrix& coupling,
                                const Matrix& E, const Matrix& F, const Nonlinearity& phi,
                                double state_lb, double state_ub, int dwell_time);

}  // namespace smdp

#endif
