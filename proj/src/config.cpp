#include "smdp/config.hpp"

#include <fstream>

#include <json.hpp>

namespace smdp {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& key, const std::string& why) {
  throw ConfigError("config key '" + key + "': " + why);
}

const json& need(const json& j, const std::string& key, const std::string& scope) {
  auto it = j.find(key);
  if (it == j.end()) fail(scope.empty() ? key : scope + "." + key, "missing");
  return *it;
}

double need_num(const json& j, const std::string& key, const std::string& scope) {
  const auto& v = need(j, key, scope);
  if (!v.is_number()) fail(scope + "." + key, "must be a number");
  return v.get<double>();
}

Matrix parse_matrix(const json& j, const std::string& key) {
  if (!j.is_array() || j.empty() || !j.at(0).is_array()) fail(key, "must be a matrix (array of rows)");
  const auto rows = j.size(), cols = j.at(0).size();
  Matrix M(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j.at(i).size() != cols) fail(key, "ragged rows");
    for (std::size_t c = 0; c < cols; ++c) M(i, c) = j.at(i).at(c).get<double>();
  }
  return M;
}

Vector parse_vector(const json& j, const std::string& key) {
  if (!j.is_array()) fail(key, "must be an array");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

Kinf parse_kinf(const json& j, const std::string& key) {
  if (j.is_number()) return Kinf::linear(j.get<double>());
  return Kinf(need_num(j, "c", key), need_num(j, "q", key));
}

Nonlinearity parse_phi(const json& j, const std::string& key) {
  const std::string kind = need(j, "kind", key).get<std::string>();
  if (kind == "none") return Nonlinearity::none();
  if (kind == "sine") return Nonlinearity::sine();
  fail(key + ".kind", "unknown nonlinearity '" + kind + "' (none | sine)");
}

NoiseModel parse_noise(const json& j, int n, const std::string& key) {
  const std::string kind = need(j, "kind", key).get<std::string>();
  if (kind == "standard") return NoiseModel::standard_normal(n);
  if (kind == "none") return NoiseModel::none(n);
  if (kind == "scaled") return NoiseModel::scaled_normal(parse_vector(need(j, "sigma", key), key + ".sigma"));
  fail(key + ".kind", "unknown noise kind '" + kind + "' (standard | scaled | none)");
}

}  // namespace

NetworkSpec load_network_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open network file " + path.string());
  json j = json::parse(is);
  NetworkSpec net;
  int idx = 0;
  for (const auto& js : need(j, "subsystems", "")) {
    const std::string scope = "subsystems[" + std::to_string(idx++) + "]";
    SubsystemSpec s;
    s.n = static_cast<int>(need_num(js, "n", scope));
    s.p_bar = static_cast<int>(need_num(js, "p_bar", scope));
    s.C = parse_matrix(need(js, "C", scope), scope + ".C");
    s.state_box = Box(parse_vector(need(need(js, "state_box", scope), "lb", scope), scope),
                      parse_vector(need(need(js, "state_box", scope), "ub", scope), scope));
    if (s.p_bar > 0)
      s.input_box = Box(parse_vector(need(need(js, "input_box", scope), "lb", scope), scope),
                        parse_vector(need(need(js, "input_box", scope), "ub", scope), scope));
    s.dwell_time = static_cast<int>(need_num(js, "dwell_time", scope));
    s.noise = parse_noise(need(js, "noise", scope), s.n, scope + ".noise");
    for (const auto& jm : need(js, "modes", scope)) {
      ModeDynamics m;
      m.A = parse_matrix(need(jm, "A", scope), scope + ".A");
      m.B = parse_vector(need(jm, "B", scope), scope + ".B");
      m.D = jm.contains("D") ? parse_matrix(jm.at("D"), scope + ".D") : Matrix::Zero(s.n, s.p_bar);
      m.R = jm.contains("R") ? parse_matrix(jm.at("R"), scope + ".R")
                             : Matrix(Matrix::Identity(s.n, s.n));
      if (jm.contains("E")) {
        m.E = parse_matrix(jm.at("E"), scope + ".E");
        m.F = parse_matrix(need(jm, "F", scope), scope + ".F");
        m.phi = parse_phi(need(jm, "phi", scope), scope + ".phi");
      } else {
        m.E = Matrix::Zero(s.n, 0);
        m.F = Matrix::Zero(0, s.n);
        m.phi = Nonlinearity::none();
      }
      s.modes.push_back(std::move(m));
    }
    net.subsystems.push_back(std::move(s));
  }
  for (const auto& jc : need(j, "connections", "")) {
    Connection c;
    c.src = static_cast<int>(need_num(jc, "src", "connections"));
    c.dst = static_cast<int>(need_num(jc, "dst", "connections"));
    c.select = parse_matrix(need(jc, "select", "connections"), "connections.select");
    net.connections.push_back(std::move(c));
  }
  net.validate();
  return net;
}

NetworkSpec make_traffic_ring(int cells, double flow_ratio, double exit_ratio,
                              const std::vector<double>& entry_per_mode, double noise_sigma,
                              double state_lb, double state_ub, int dwell_time) {
  if (cells < 2) throw ConfigError("traffic ring needs at least 2 cells");
  const double a = 1.0 - flow_ratio - exit_ratio;
  NetworkSpec net;
  for (int i = 0; i < cells; ++i) {
    SubsystemSpec s;
    s.n = 1;
    s.p_bar = 1;
    s.C = Matrix::Identity(1, 1);
    s.state_box = Box::interval(state_lb, state_ub);
    s.input_box = Box::interval(state_lb, state_ub);
    s.dwell_time = dwell_time;
    s.noise = noise_sigma > 0.0 ? NoiseModel::scaled_normal(Vector::Constant(1, noise_sigma))
                                : NoiseModel::none(1);
    for (double b : entry_per_mode) {
      Matrix A(1, 1), D(1, 1), R(1, 1);
      A << a;
      D << flow_ratio;
      R << 1.0;
      s.modes.push_back(ModeDynamics::linear(A, Vector::Constant(1, b), D, R));
    }
    net.subsystems.push_back(std::move(s));
  }
  for (int i = 0; i < cells; ++i) {
    Connection c;
    c.src = i;
    c.dst = (i + 1) % cells;
    c.select = Matrix::Identity(1, 1);
    net.connections.push_back(std::move(c));
  }
  net.validate();
  return net;
}

NetworkSpec make_nonlinear_full(int subsystems, const std::vector<Matrix>& A_modes,
                                const std::vector<Vector>& b_modes, const Matrix& coupling,
                                const Matrix& E, const Matrix& F, const Nonlinearity& phi,
                                double state_lb, double state_ub, int dwell_time) {
  if (subsystems < 2) throw ConfigError("fully connected network needs at least 2 subsystems");
  if (A_modes.empty() || A_modes.size() != b_modes.size())
    throw ConfigError("nonlinear network: one A and b per mode required");
  const int n = static_cast<int>(A_modes[0].rows());
  const int p_bar = n * (subsystems - 1);
  NetworkSpec net;
  for (int i = 0; i < subsystems; ++i) {
    SubsystemSpec s;
    s.n = n;
    s.p_bar = p_bar;
    s.C = Matrix::Identity(n, n);
    s.state_box = Box::cube(n, state_lb, state_ub);
    s.input_box = Box::cube(p_bar, state_lb, state_ub);
    s.dwell_time = dwell_time;
    s.noise = NoiseModel::standard_normal(n);
    for (std::size_t p = 0; p < A_modes.size(); ++p) {
      ModeDynamics m;
      m.A = A_modes[p];
      m.B = b_modes[p];
      /* every neighbor couples through the same block */
      m.D = Matrix::Zero(n, p_bar);
      for (int k = 0; k < subsystems - 1; ++k) m.D.block(0, k * n, n, n) = coupling;
      m.E = E;
      m.F = F;
      m.R = Matrix::Identity(n, n);
      m.phi = phi;
      s.modes.push_back(std::move(m));
    }
    net.subsystems.push_back(std::move(s));
  }
  for (int i = 0; i < subsystems; ++i)
    for (int jj = 0; jj < subsystems; ++jj) {
      if (i == jj) continue;
      Connection c;
      c.src = i;
      c.dst = jj;
      c.select = Matrix::Identity(n, n);
      net.connections.push_back(std::move(c));
    }
  net.validate();
  return net;
}

ProjectConfig ProjectConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }

  ProjectConfig cfg;

  const auto& jn = need(j, "network", "");
  const std::string kind = need(jn, "kind", "network").get<std::string>();
  if (kind == "traffic-ring") {
    std::vector<double> entry;
    for (const auto& b : need(jn, "entry_per_mode", "network")) entry.push_back(b.get<double>());
    cfg.network = make_traffic_ring(
        static_cast<int>(need_num(jn, "cells", "network")), need_num(jn, "flow_ratio", "network"),
        need_num(jn, "exit_ratio", "network"), entry, need_num(jn, "noise_sigma", "network"),
        need_num(jn, "state_lb", "network"), need_num(jn, "state_ub", "network"),
        static_cast<int>(need_num(jn, "dwell_time", "network")));
    cfg.homogeneous = true;
  } else if (kind == "nonlinear-full") {
    std::vector<Matrix> A_modes;
    for (const auto& a : need(jn, "A_modes", "network")) A_modes.push_back(parse_matrix(a, "network.A_modes"));
    std::vector<Vector> b_modes;
    for (const auto& b : need(jn, "b_modes", "network")) b_modes.push_back(parse_vector(b, "network.b_modes"));
    cfg.network = make_nonlinear_full(
        static_cast<int>(need_num(jn, "subsystems", "network")), A_modes, b_modes,
        parse_matrix(need(jn, "coupling", "network"), "network.coupling"),
        parse_matrix(need(jn, "E", "network"), "network.E"),
        parse_matrix(need(jn, "F", "network"), "network.F"),
        parse_phi(need(jn, "phi", "network"), "network.phi"), need_num(jn, "state_lb", "network"),
        need_num(jn, "state_ub", "network"),
        static_cast<int>(need_num(jn, "dwell_time", "network")));
    cfg.homogeneous = true;
  } else if (kind == "file") {
    auto rel = std::filesystem::path(need(jn, "path", "network").get<std::string>());
    if (rel.is_relative()) rel = path.parent_path() / rel;
    cfg.network = load_network_json(rel);
    cfg.homogeneous = jn.value("homogeneous", false);
  } else {
    fail("network.kind", "unknown kind '" + kind + "' (traffic-ring | nonlinear-full | file)");
  }

  if (j.contains("grid")) {
    const auto& jg = j.at("grid");
    /* "delta" is a single target or a per-subsystem array */
    const auto& jd = need(jg, "delta", "grid");
    if (jd.is_array()) {
      for (const auto& d : jd) cfg.grid.delta_per_subsystem.push_back(d.get<double>());
      if (cfg.grid.delta_per_subsystem.size() != static_cast<std::size_t>(cfg.network.size()))
        fail("grid.delta", "per-subsystem array must match the network size");
      cfg.grid.delta = cfg.grid.delta_per_subsystem.front();
    } else {
      cfg.grid.delta = jd.get<double>();
    }
    if (jg.contains("input_delta")) {
      const auto& ji = jg.at("input_delta");
      if (ji.is_array()) {
        for (const auto& d : ji) cfg.grid.input_delta_per_subsystem.push_back(d.get<double>());
        if (cfg.grid.input_delta_per_subsystem.size() !=
            static_cast<std::size_t>(cfg.network.size()))
          fail("grid.input_delta", "per-subsystem array must match the network size");
      } else {
        cfg.grid.input_delta = ji.get<double>();
      }
    }
    cfg.grid.matched_io = jg.value("matched_io", true);
    cfg.grid.memory_cap_gb = jg.value("memory_cap_gb", 4.0);
    cfg.grid.window_sigmas = jg.value("window_sigmas", 8.0);
    cfg.grid.export_rows = jg.value("export_rows", 0);
  }

  const auto& jc = need(j, "certificates", "");
  auto& cc = cfg.certificates;
  cc.source = need(jc, "source", "certificates").get<std::string>();
  if (cc.source != "paper" && cc.source != "derive" && cc.source != "file")
    fail("certificates.source", "must be paper | derive | file");
  if (cc.source == "file") {
    auto rel = std::filesystem::path(need(jc, "path", "certificates").get<std::string>());
    if (rel.is_relative()) rel = path.parent_path() / rel;
    cc.path = rel;
  } else {
    for (const auto& jm : need(jc, "modes", "certificates"))
      cc.modes.push_back(ModeCertificate{parse_matrix(need(jm, "M", "certificates.modes"), "M"),
                                         need_num(jm, "kappa_bar", "certificates.modes"),
                                         need_num(jm, "pi", "certificates.modes")});
    cc.epsilon = jc.value("epsilon", 1.75);
    if (jc.contains("dwell_time")) cc.dwell_time = jc.at("dwell_time").get<int>();
    if (jc.contains("pi_tilde")) cc.pi_tilde = jc.at("pi_tilde").get<double>();
    if (jc.contains("delta_c")) cc.delta_c = jc.at("delta_c").get<double>();
    cc.kappa_ceiling = jc.value("kappa_ceiling", 0.99);
    cc.common_lyapunov = jc.value("common_lyapunov", false);
    if (cc.source == "paper") {
      if (jc.contains("mu")) cc.mu = jc.at("mu").get<double>();
      cc.kappa = need_num(jc, "kappa", "certificates");
      cc.rho_int = parse_kinf(need(jc, "rho_int", "certificates"), "certificates.rho_int");
      cc.psi_coeff = need_num(jc, "psi_coeff", "certificates");
      cc.alpha = parse_kinf(need(jc, "alpha", "certificates"), "certificates.alpha");
    }
  }
  cc.lambda_bar = jc.value("lambda_bar", 1.1);
  cc.delta_f = jc.value("delta_f", 0.05);
  cc.validation_tuples = jc.value("validation_tuples", 0);
  cc.validation_inner = jc.value("validation_inner", 200);

  if (j.contains("bound")) {
    const auto& jb = j.at("bound");
    cfg.bound.eps = jb.value("eps", 1.0);
    cfg.bound.horizon = jb.value("horizon", 10);
    cfg.bound.v0 = jb.value("v0", 0.0);
    if (jb.contains("deltas"))
      for (const auto& d : jb.at("deltas")) cfg.bound.deltas.push_back(d.get<double>());
  }
  if (cfg.bound.deltas.empty())
    cfg.bound.deltas = {0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1};

  if (j.contains("synthesis")) {
    const auto& js = j.at("synthesis");
    if (js.contains("safe_lb")) cfg.synthesis.safe_lb = parse_vector(js.at("safe_lb"), "synthesis.safe_lb");
    if (js.contains("safe_ub")) cfg.synthesis.safe_ub = parse_vector(js.at("safe_ub"), "synthesis.safe_ub");
    cfg.synthesis.horizon = js.value("horizon", 10);
  }

  if (j.contains("simulation")) {
    const auto& js = j.at("simulation");
    cfg.simulation.runs = js.value("runs", 1000);
    cfg.simulation.horizon = js.value("horizon", 10);
    cfg.simulation.seed = js.value("seed", std::uint64_t{1});
    cfg.simulation.eps = js.value("eps", 1.0);
    if (js.contains("initial_state"))
      cfg.simulation.initial_state = parse_vector(js.at("initial_state"), "simulation.initial_state");
    cfg.simulation.initial_mode = js.value("initial_mode", 0);
    cfg.simulation.keep_paths = js.value("keep_paths", 3);
  }

  if (j.contains("output_dir")) {
    auto rel = std::filesystem::path(j.at("output_dir").get<std::string>());
    cfg.output_dir = rel;
  }
  return cfg;
}

}  // namespace smdp
