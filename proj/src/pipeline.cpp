#include "dcsflow/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "dcsflow/errors.hpp"
#include "dcsflow/io.hpp"
#include "dcsflow/rng.hpp"

namespace dcsflow {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& scope) {
  if (!j.is_object()) throw ValidationError("config: " + scope + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key()))
      throw ValidationError("config: unknown key \"" + item.key() + "\" in " + scope);
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

Vec2 read_vec2(const json& j, const char* key, const Vec2& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& arr = j.at(key);
  if (!arr.is_array() || arr.size() != 2)
    throw ValidationError(std::string("config: ") + key + " must be a [x, y] pair");
  return {arr.at(0).get<double>(), arr.at(1).get<double>()};
}

int resolve_threads(int configured) {
  if (configured > 0) return configured;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace

void PipelineConfig::validate() const {
  if (schema_version != 1) throw ValidationError("config: unsupported schema version");
  flow.validate();
  grid.validate();
  times.validate();
  pod_truncation.validate();
  weights.validate();

  const int n_loc = grid.node_count();
  if (waypoint_count < 1) throw ValidationError("config: waypoint count must be at least 1");
  if (waypoint_count >= n_loc)
    throw ValidationError("config: waypoint count must be below the grid node count");
  if (waypoint_trials < 1) throw ValidationError("config: waypoint trials must be at least 1");
  if (selection.snapshot_index < 0 || selection.snapshot_index >= times.count)
    throw ValidationError("config: selection snapshot index out of range");
  if (selection.eps_noise < 0.0) throw ValidationError("config: eps_noise must be nonnegative");

  if (!grid.contains(start) || !grid.contains(goal))
    throw ValidationError("config: start and goal must lie inside the flow domain");
  if (!(speed_max > 0.0)) throw ValidationError("config: speed limit must be positive");
  if (steps_per_segment < 1) throw ValidationError("config: steps per segment must be >= 1");
  if (shuffle_trials < 1) throw ValidationError("config: shuffle trials must be at least 1");
  if (recon_policy.window < 0) throw ValidationError("config: window must be nonnegative");

  for (const int s : sweep_sizes)
    if (s < 1 || s >= n_loc) throw ValidationError("config: sweep sizes must lie in [1, n_loc)");
  if (sweep_sets < 1 || sweep_shuffles < 1)
    throw ValidationError("config: sweep sets and shuffles must be at least 1");
  if (threads < 0) throw ValidationError("config: threads must be nonnegative");
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  check_keys(j,
             {"schema_version", "seed", "output_dir", "threads", "flow", "grid", "time", "pod",
              "selection", "trajectory", "sweep"},
             "top level");
  read_field(j, "schema_version", c.schema_version);
  read_field(j, "seed", c.seed);
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  read_field(j, "threads", c.threads);

  if (j.contains("flow")) {
    const auto& f = j.at("flow");
    check_keys(f, {"amplitude", "epsilon", "omega"}, "flow");
    read_field(f, "amplitude", c.flow.amplitude);
    read_field(f, "epsilon", c.flow.epsilon);
    read_field(f, "omega", c.flow.omega);
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    check_keys(g, {"nx", "ny"}, "grid");
    read_field(g, "nx", c.grid.nx);
    read_field(g, "ny", c.grid.ny);
  }
  if (j.contains("time")) {
    const auto& t = j.at("time");
    check_keys(t, {"t0", "dt", "count"}, "time");
    read_field(t, "t0", c.times.t0);
    read_field(t, "dt", c.times.dt);
    read_field(t, "count", c.times.count);
  }
  if (j.contains("pod")) {
    const auto& p = j.at("pod");
    check_keys(p, {"flavor", "mode_count", "energy_fraction"}, "pod");
    if (p.contains("flavor")) {
      const std::string flavor = p.at("flavor").get<std::string>();
      if (flavor == "svd")
        c.pod_flavor = PodFlavor::svd;
      else if (flavor == "covariance-eigen")
        c.pod_flavor = PodFlavor::covariance_eigen;
      else
        throw ValidationError("config: pod flavor must be \"svd\" or \"covariance-eigen\"");
    }
    read_field(p, "mode_count", c.pod_truncation.count);
    read_field(p, "energy_fraction", c.pod_truncation.energy_fraction);
  }
  if (j.contains("selection")) {
    const auto& s = j.at("selection");
    check_keys(s,
               {"waypoint_count", "trial_count", "snapshot_index", "gamma", "eps_noise",
                "max_iterations"},
               "selection");
    read_field(s, "waypoint_count", c.waypoint_count);
    read_field(s, "trial_count", c.waypoint_trials);
    read_field(s, "snapshot_index", c.selection.snapshot_index);
    read_field(s, "gamma", c.selection.gamma);
    read_field(s, "eps_noise", c.selection.eps_noise);
    read_field(s, "max_iterations", c.selection.solver.max_iterations);
  }
  if (j.contains("trajectory")) {
    const auto& t = j.at("trajectory");
    check_keys(t,
               {"start", "goal", "weights", "speed_max", "steps_per_segment", "shuffle_trials",
                "accumulation", "window", "max_outer", "max_inner", "constraint_tol",
                "cost_tol"},
               "trajectory");
    c.start = read_vec2(t, "start", c.start);
    c.goal = read_vec2(t, "goal", c.goal);
    if (t.contains("weights")) {
      const auto& w = t.at("weights");
      check_keys(w, {"duration", "recon", "energy"}, "trajectory.weights");
      read_field(w, "duration", c.weights.duration);
      read_field(w, "recon", c.weights.recon);
      read_field(w, "energy", c.weights.energy);
    }
    read_field(t, "speed_max", c.speed_max);
    read_field(t, "steps_per_segment", c.steps_per_segment);
    read_field(t, "shuffle_trials", c.shuffle_trials);
    if (t.contains("accumulation")) {
      const std::string mode = t.at("accumulation").get<std::string>();
      if (mode == "per-instant")
        c.recon_policy.mode = AccumulationMode::per_instant;
      else if (mode == "cumulative-window")
        c.recon_policy.mode = AccumulationMode::cumulative_window;
      else
        throw ValidationError(
            "config: accumulation must be \"per-instant\" or \"cumulative-window\"");
    }
    read_field(t, "window", c.recon_policy.window);
    read_field(t, "max_outer", c.optimizer.max_outer);
    read_field(t, "max_inner", c.optimizer.max_inner);
    read_field(t, "constraint_tol", c.optimizer.constraint_tol);
    read_field(t, "cost_tol", c.optimizer.cost_tol);
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, {"sizes", "sets_per_size", "shuffles_per_set"}, "sweep");
    if (s.contains("sizes")) c.sweep_sizes = s.at("sizes").get<std::vector<int>>();
    read_field(s, "sets_per_size", c.sweep_sets);
    read_field(s, "shuffles_per_set", c.sweep_shuffles);
  }

  c.optimizer.steps_per_segment = c.steps_per_segment;
  c.optimizer.recon_policy = c.recon_policy;
  // Steady flows keep the full measurement history (all snapshots agree).
  if (c.flow.steady()) c.optimizer.recon_policy.window = 0;
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("config parse error in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

json PipelineConfig::to_json() const {
  json j;
  j["schema_version"] = schema_version;
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  j["threads"] = threads;
  j["flow"] = {{"amplitude", flow.amplitude}, {"epsilon", flow.epsilon}, {"omega", flow.omega}};
  j["grid"] = {{"nx", grid.nx}, {"ny", grid.ny}};
  j["time"] = {{"t0", times.t0}, {"dt", times.dt}, {"count", times.count}};
  j["pod"] = {{"flavor", pod_flavor == PodFlavor::svd ? "svd" : "covariance-eigen"},
              {"mode_count", pod_truncation.count},
              {"energy_fraction", pod_truncation.energy_fraction}};
  j["selection"] = {{"waypoint_count", waypoint_count},
                    {"trial_count", waypoint_trials},
                    {"snapshot_index", selection.snapshot_index},
                    {"gamma", selection.gamma},
                    {"eps_noise", selection.eps_noise},
                    {"max_iterations", selection.solver.max_iterations}};
  j["trajectory"] = {
      {"start", {start.x(), start.y()}},
      {"goal", {goal.x(), goal.y()}},
      {"weights",
       {{"duration", weights.duration}, {"recon", weights.recon}, {"energy", weights.energy}}},
      {"speed_max", speed_max},
      {"steps_per_segment", steps_per_segment},
      {"shuffle_trials", shuffle_trials},
      {"accumulation",
       recon_policy.mode == AccumulationMode::per_instant ? "per-instant" : "cumulative-window"},
      {"window", recon_policy.window},
      {"max_outer", optimizer.max_outer},
      {"max_inner", optimizer.max_inner},
      {"constraint_tol", optimizer.constraint_tol},
      {"cost_tol", optimizer.cost_tol}};
  j["sweep"] = {{"sizes", sweep_sizes},
                {"sets_per_size", sweep_sets},
                {"shuffles_per_set", sweep_shuffles}};
  return j;
}

std::string PipelineConfig::hash() const {
  const std::string dump = to_json().dump();
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(dump.data(), dump.size())));
  return hex;
}

namespace {

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory " + dir.string());
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing artifact " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("artifact parse error in " + path.string() + ": " + e.what());
  }
  return j;
}

struct PipelineContext {
  const PipelineConfig& config;
  std::filesystem::path dir;
  bool prefer_disk = true;  // standalone stages reuse artifacts; `run` rebuilds

  SnapshotMatrix snapshots;
  bool have_snapshots = false;
  PodBasis basis;
  bool have_basis = false;

  explicit PipelineContext(const PipelineConfig& c, bool reuse = true)
      : config(c), dir(c.output_dir), prefer_disk(reuse) {}

  const SnapshotMatrix& get_snapshots() {
    if (!have_snapshots) {
      const auto data_path = dir / "snapshot.bin";
      const auto mean_path = dir / "snapshot_mean.bin";
      if (prefer_disk && std::filesystem::exists(data_path) &&
          std::filesystem::exists(mean_path)) {
        snapshots.data = read_matrix(data_path);
        snapshots.mean_field = read_vector(mean_path);
        snapshots.grid = config.grid;
        snapshots.times = config.times;
        if (snapshots.data.rows() != 2 * config.grid.node_count() ||
            snapshots.data.cols() != config.times.count)
          throw ValidationError("stored snapshot matrix does not match the config grid");
      } else {
        snapshots = build_snapshot_matrix(config.grid, config.times, config.flow);
      }
      have_snapshots = true;
    }
    return snapshots;
  }

  const PodBasis& get_basis() {
    if (!have_basis) {
      const auto& snaps = get_snapshots();
      basis = config.pod_flavor == PodFlavor::svd ? pod_svd(snaps, config.pod_truncation)
                                                  : pod_covariance(snaps, config.pod_truncation);
      have_basis = true;
    }
    return basis;
  }
};

json waypoints_to_json(const WaypointSet& set) {
  json positions = json::array();
  for (const Vec2& p : set.positions) positions.push_back({p.x(), p.y()});
  json trials = json::array();
  for (size_t i = 0; i < set.trial_errors.size(); ++i)
    trials.push_back({{"error", set.trial_errors[i]},
                      {"basis_pursuit_converged", static_cast<bool>(set.trial_converged[i])}});
  return json{{"m", set.m},
              {"ids", set.ids},
              {"positions", positions},
              {"recon_error", set.recon_error},
              {"seed", set.seed},
              {"best_trial", set.best_trial},
              {"underdetermined", set.underdetermined},
              {"trials", trials}};
}

WaypointSet waypoints_from_json(const json& j, const GridSpec& grid) {
  WaypointSet set;
  set.m = j.at("m").get<int>();
  set.ids = j.at("ids").get<std::vector<int>>();
  set.recon_error = j.at("recon_error").get<double>();
  set.seed = j.at("seed").get<std::uint64_t>();
  set.best_trial = j.at("best_trial").get<int>();
  for (const int id : set.ids) set.positions.push_back(grid.node_position(id));
  if (j.contains("trials")) {
    for (const auto& t : j.at("trials")) {
      set.trial_errors.push_back(t.at("error").get<double>());
      set.trial_converged.push_back(t.at("basis_pursuit_converged").get<bool>());
    }
  }
  return set;
}

json cost_to_json(const CostBreakdown& c) {
  return json{{"duration", c.duration},
              {"recon_error", c.recon_error},
              {"energy", c.energy},
              {"total", c.total}};
}

json trajectory_to_json(const ShuffleResult& result) {
  const Trajectory& traj = result.best.trajectory;
  json knots = json::array();
  for (const Vec2& k : traj.plan.knots) knots.push_back({k.x(), k.y()});
  // Knot velocities and bubble weights reconstruct the spline.
  json velocities = json::array();
  json bubble = json::array();
  const int segments = traj.plan.segment_count();
  for (int k = 0; k <= segments; ++k) {
    const Vec2 v0 = k < segments ? Vec2(traj.coefficients[static_cast<size_t>(k)].col(1))
                                 : traj.velocities.col(traj.positions.cols() - 1);
    velocities.push_back({v0.x(), v0.y()});
  }
  for (int k = 0; k < segments; ++k) {
    const auto& c = traj.coefficients[static_cast<size_t>(k)];
    const double d = traj.plan.durations(k);
    const Vec2 w = c.col(4) * (d * d * d * d);
    bubble.push_back({w.x(), w.y()});
  }

  json trials = json::array();
  for (const ShuffleTrial& t : result.trials) {
    trials.push_back({{"order", t.order},
                      {"cost", cost_to_json(t.cost)},
                      {"converged", t.converged},
                      {"failed", t.failed},
                      {"error", t.error}});
  }

  json durations = json::array();
  for (Eigen::Index k = 0; k < traj.plan.durations.size(); ++k)
    durations.push_back(traj.plan.durations(k));

  return json{{"best_trial", result.best_trial},
              {"cost", cost_to_json(result.best.cost)},
              {"converged", result.best.converged},
              {"constraint_violation", result.best.constraint_violation},
              {"iterations", result.best.iterations},
              {"order", result.trials[static_cast<size_t>(result.best_trial)].order},
              {"spline",
               {{"knots", knots},
                {"durations", durations},
                {"steps_per_segment", traj.plan.steps_per_segment},
                {"knot_velocities", velocities},
                {"bubble", bubble}}},
              {"trials", trials}};
}

Trajectory trajectory_from_json(const json& j) {
  const auto& spline = j.at("spline");
  SegmentPlan plan;
  for (const auto& k : spline.at("knots"))
    plan.knots.push_back({k.at(0).get<double>(), k.at(1).get<double>()});
  const auto durations = spline.at("durations").get<std::vector<double>>();
  plan.durations = Eigen::Map<const Eigen::VectorXd>(durations.data(),
                                                     static_cast<Eigen::Index>(durations.size()));
  plan.steps_per_segment = spline.at("steps_per_segment").get<int>();

  SplineControls controls;
  const auto vel = spline.at("knot_velocities");
  controls.knot_velocities.resize(2, static_cast<Eigen::Index>(vel.size()));
  for (Eigen::Index k = 0; k < controls.knot_velocities.cols(); ++k) {
    controls.knot_velocities(0, k) = vel.at(k).at(0).get<double>();
    controls.knot_velocities(1, k) = vel.at(k).at(1).get<double>();
  }
  const auto bub = spline.at("bubble");
  controls.bubble.resize(2, static_cast<Eigen::Index>(bub.size()));
  for (Eigen::Index k = 0; k < controls.bubble.cols(); ++k) {
    controls.bubble(0, k) = bub.at(k).at(0).get<double>();
    controls.bubble(1, k) = bub.at(k).at(1).get<double>();
  }
  return build_spline(plan, controls);
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj,
                          const std::vector<double>& step_errors) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out << "t,x,y,vx,vy,e\n";
  for (int i = 0; i < traj.positions.cols(); ++i) {
    out << format_double(traj.timestamps[static_cast<size_t>(i)]) << ','
        << format_double(traj.positions(0, i)) << ',' << format_double(traj.positions(1, i))
        << ',' << format_double(traj.velocities(0, i)) << ','
        << format_double(traj.velocities(1, i)) << ','
        << format_double(step_errors[static_cast<size_t>(i)]) << "\n";
  }
}

}  // namespace

namespace {

StageArtifacts run_generate_impl(PipelineContext& ctx) {
  const SnapshotMatrix& snaps = ctx.get_snapshots();
  StageArtifacts out;
  write_matrix(ctx.dir / "snapshot.bin", snaps.data);
  out.files.push_back(ctx.dir / "snapshot.bin");
  write_vector(ctx.dir / "snapshot_mean.bin", snaps.mean_field);
  out.files.push_back(ctx.dir / "snapshot_mean.bin");
  write_snapshot_csv(ctx.dir / "snapshot.csv", snaps);
  out.files.push_back(ctx.dir / "snapshot.csv");
  return out;
}

StageArtifacts run_pod_impl(PipelineContext& ctx) {
  const PodBasis& basis = ctx.get_basis();
  StageArtifacts out;
  write_matrix(ctx.dir / "basis.bin", basis.modes);
  out.files.push_back(ctx.dir / "basis.bin");
  write_vector(ctx.dir / "basis_mean.bin", basis.mean_field);
  out.files.push_back(ctx.dir / "basis_mean.bin");

  json sidecar;
  sidecar["flavor"] = basis.flavor == PodFlavor::svd ? "svd" : "covariance-eigen";
  sidecar["rank"] = basis.rank();
  sidecar["rank_deficient"] = basis.rank_deficient;
  sidecar["energies"] = std::vector<double>(basis.energies.data(),
                                            basis.energies.data() + basis.energies.size());
  sidecar["grid"] = {{"nx", basis.grid.nx}, {"ny", basis.grid.ny}};
  sidecar["modes_file"] = "basis.bin";
  sidecar["mean_field_file"] = "basis_mean.bin";
  write_json_file(ctx.dir / "basis.json", sidecar);
  out.files.push_back(ctx.dir / "basis.json");
  return out;
}

StageArtifacts run_select_impl(PipelineContext& ctx) {
  const PipelineConfig& config = ctx.config;
  SelectionOptions opts = config.selection;
  opts.threads = resolve_threads(config.threads);
  const WaypointSet set =
      select_waypoints(ctx.get_snapshots(), ctx.get_basis(), config.waypoint_count,
                       config.waypoint_trials, derive_seed(config.seed, "select-stage", 0), opts);
  StageArtifacts out;
  write_json_file(ctx.dir / "waypoints.json", waypoints_to_json(set));
  out.files.push_back(ctx.dir / "waypoints.json");
  return out;
}

StageArtifacts run_plan_impl(PipelineContext& ctx) {
  const PipelineConfig& config = ctx.config;
  const WaypointSet set =
      waypoints_from_json(load_json_file(ctx.dir / "waypoints.json"), config.grid);

  const DoubleGyreSampler truth(config.flow, ctx.get_snapshots());
  TrajectoryLimits limits;
  limits.speed_max = config.speed_max;
  limits.x_bounds = config.grid.x_range;
  limits.y_bounds = config.grid.y_range;
  limits.flow_speed_bound = config.flow.speed_bound();

  OptimizeOptions opts = config.optimizer;
  opts.steps_per_segment = config.steps_per_segment;
  opts.recon_policy = config.recon_policy;
  if (config.flow.steady()) opts.recon_policy.window = 0;

  const ShuffleResult result = shuffle_and_optimize(
      set, config.shuffle_trials, config.start, config.goal, ctx.get_basis(), truth,
      config.weights, limits, derive_seed(config.seed, "plan-stage", 0), opts,
      resolve_threads(config.threads));

  const TrajectoryReconstruction recon = trajectory_reconstruction_error(
      result.best.trajectory, ctx.get_basis(), truth, opts.recon_policy);

  StageArtifacts out;
  write_trajectory_csv(ctx.dir / "trajectory.csv", result.best.trajectory, recon.step_errors);
  out.files.push_back(ctx.dir / "trajectory.csv");
  write_json_file(ctx.dir / "trajectory.json", trajectory_to_json(result));
  out.files.push_back(ctx.dir / "trajectory.json");
  return out;
}

StageArtifacts run_evaluate_impl(PipelineContext& ctx) {
  const PipelineConfig& config = ctx.config;
  const Trajectory traj = trajectory_from_json(load_json_file(ctx.dir / "trajectory.json"));
  const DoubleGyreSampler truth(config.flow, ctx.get_snapshots());

  ReconstructionPolicy policy = config.recon_policy;
  if (config.flow.steady()) policy.window = 0;

  const PodBasis& basis = ctx.get_basis();
  const TrajectoryReconstruction recon =
      trajectory_reconstruction_error(traj, basis, truth, policy);
  const FieldEstimate final_step = reconstruct_at_step(traj, basis, truth, policy);

  StageArtifacts out;
  write_field_map_csv(ctx.dir / "recon_reference_u.csv", final_step.reference, config.grid, 0);
  out.files.push_back(ctx.dir / "recon_reference_u.csv");
  write_field_map_csv(ctx.dir / "recon_estimate_u.csv", final_step.estimate, config.grid, 0);
  out.files.push_back(ctx.dir / "recon_estimate_u.csv");
  const Eigen::VectorXd difference = final_step.estimate - final_step.reference;
  write_field_map_csv(ctx.dir / "recon_difference_u.csv", difference, config.grid, 0);
  out.files.push_back(ctx.dir / "recon_difference_u.csv");
  write_vector(ctx.dir / "recon_estimate.bin", final_step.estimate);
  out.files.push_back(ctx.dir / "recon_estimate.bin");
  write_vector(ctx.dir / "recon_reference.bin", final_step.reference);
  out.files.push_back(ctx.dir / "recon_reference.bin");

  {
    std::ofstream series(ctx.dir / "recon_series.csv");
    series << "step,t,e\n";
    for (size_t i = 0; i < recon.step_errors.size(); ++i)
      series << i << ',' << format_double(traj.timestamps[i]) << ','
             << format_double(recon.step_errors[i]) << "\n";
  }
  out.files.push_back(ctx.dir / "recon_series.csv");

  const int n_loc = config.grid.node_count();
  const auto rms = [](const Eigen::VectorXd& v) {
    return v.size() ? std::sqrt(v.squaredNorm() / static_cast<double>(v.size())) : 0.0;
  };
  json summary;
  summary["final_step"] = final_step.step;
  summary["final_time"] = traj.timestamps[static_cast<size_t>(final_step.step)];
  summary["total_error"] = recon.total_error;
  summary["underdetermined_steps"] = recon.underdetermined_steps;
  summary["final_underdetermined"] = final_step.underdetermined;
  summary["reference_rms_u"] = rms(final_step.reference.head(n_loc));
  summary["difference_rms_u"] = rms(difference.head(n_loc));
  summary["reference_rms"] = rms(final_step.reference);
  summary["difference_rms"] = rms(difference);
  write_json_file(ctx.dir / "recon_summary.json", summary);
  out.files.push_back(ctx.dir / "recon_summary.json");
  return out;
}

}  // namespace

StageArtifacts run_generate(const PipelineConfig& config) {
  config.validate();
  PipelineContext ctx(config, /*reuse=*/false);
  ensure_dir(ctx.dir);
  return run_generate_impl(ctx);
}

StageArtifacts run_pod(const PipelineConfig& config) {
  config.validate();
  PipelineContext ctx(config);
  ensure_dir(ctx.dir);
  return run_pod_impl(ctx);
}

StageArtifacts run_select(const PipelineConfig& config) {
  config.validate();
  PipelineContext ctx(config);
  ensure_dir(ctx.dir);
  return run_select_impl(ctx);
}

StageArtifacts run_plan(const PipelineConfig& config) {
  config.validate();
  PipelineContext ctx(config);
  ensure_dir(ctx.dir);
  return run_plan_impl(ctx);
}

StageArtifacts run_evaluate(const PipelineConfig& config) {
  config.validate();
  PipelineContext ctx(config);
  ensure_dir(ctx.dir);
  return run_evaluate_impl(ctx);
}

StageArtifacts run_pipeline(const PipelineConfig& config) {
  config.validate();
  PipelineContext ctx(config, /*reuse=*/false);
  ensure_dir(ctx.dir);

  StageArtifacts all;
  const auto append = [&all](const StageArtifacts& stage) {
    all.files.insert(all.files.end(), stage.files.begin(), stage.files.end());
  };
  append(run_generate_impl(ctx));
  append(run_pod_impl(ctx));
  append(run_select_impl(ctx));
  append(run_plan_impl(ctx));
  append(run_evaluate_impl(ctx));

  json manifest;
  manifest["schema_version"] = config.schema_version;
  manifest["config"] = config.to_json();
  manifest["config_hash"] = config.hash();
  manifest["seeds"] = {{"master", config.seed},
                       {"select", derive_seed(config.seed, "select-stage", 0)},
                       {"plan", derive_seed(config.seed, "plan-stage", 0)}};
  json files = json::array();
  for (const auto& path : all.files) {
    files.push_back({{"path", std::filesystem::relative(path, ctx.dir).string()},
                     {"fnv1a64", file_hash_hex(path)}});
  }
  manifest["files"] = files;
  write_json_file(ctx.dir / "manifest.json", manifest);
  all.files.push_back(ctx.dir / "manifest.json");
  return all;
}

namespace {

struct Welford {
  // Two-pass is overkill; sample mean/sigma with the (n-1) convention.
  std::vector<double> values;
  void add(double v) { values.push_back(v); }
  double mean() const {
    if (values.empty()) return 0.0;
    double s = 0.0;
    for (const double v : values) s += v;
    return s / static_cast<double>(values.size());
  }
  double sigma() const {
    if (values.size() < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (const double v : values) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(values.size() - 1));
  }
};

}  // namespace

SweepReport sweep(const PipelineConfig& config, const std::vector<int>& sizes, int sets_per_size,
                  int shuffles_per_set) {
  config.validate();
  if (sizes.empty()) throw ValidationError("sweep: need at least one waypoint size");
  if (sets_per_size < 1 || shuffles_per_set < 1)
    throw ValidationError("sweep: sets and shuffles must be at least 1");

  PipelineContext ctx(config);
  const SnapshotMatrix& snaps = ctx.get_snapshots();
  const PodBasis& basis = ctx.get_basis();
  const DoubleGyreSampler truth(config.flow, snaps);

  TrajectoryLimits limits;
  limits.speed_max = config.speed_max;
  limits.x_bounds = config.grid.x_range;
  limits.y_bounds = config.grid.y_range;
  limits.flow_speed_bound = config.flow.speed_bound();

  OptimizeOptions opts = config.optimizer;
  opts.steps_per_segment = config.steps_per_segment;
  opts.recon_policy = config.recon_policy;
  if (config.flow.steady()) opts.recon_policy.window = 0;

  const int threads = resolve_threads(config.threads);
  SelectionOptions select_opts = config.selection;
  select_opts.threads = threads;

  SweepReport report;
  for (const int size : sizes) {
    Welford recon, energy, duration;
    int failures = 0;
    for (int set_idx = 0; set_idx < sets_per_size; ++set_idx) {
      const std::uint64_t cell_seed =
          derive_seed(config.seed, "sweep",
                      static_cast<std::uint64_t>(size) * 1000003ULL +
                          static_cast<std::uint64_t>(set_idx));
      std::vector<SweepRecord> cell(static_cast<size_t>(shuffles_per_set));
      for (int k = 0; k < shuffles_per_set; ++k) {
        cell[static_cast<size_t>(k)].size = size;
        cell[static_cast<size_t>(k)].set_index = set_idx;
        cell[static_cast<size_t>(k)].shuffle_index = k;
      }
      try {
        const WaypointSet set = select_waypoints(snaps, basis, size, config.waypoint_trials,
                                                 cell_seed, select_opts);
        const ShuffleResult result = shuffle_and_optimize(
            set, shuffles_per_set, config.start, config.goal, basis, truth, config.weights,
            limits, derive_seed(cell_seed, "sweep-shuffle", 0), opts, threads);
        for (int k = 0; k < shuffles_per_set; ++k) {
          SweepRecord& rec = cell[static_cast<size_t>(k)];
          const ShuffleTrial& trial = result.trials[static_cast<size_t>(k)];
          rec.failed = trial.failed;
          if (trial.failed) continue;
          rec.converged = trial.converged;
          rec.recon_error = trial.cost.recon_error;
          rec.energy = trial.cost.energy;
          rec.duration = trial.cost.duration;
        }
      } catch (const std::exception&) {
        for (auto& rec : cell) rec.failed = true;
      }
      for (const SweepRecord& rec : cell) {
        report.records.push_back(rec);
        if (rec.failed) {
          ++failures;
        } else {
          recon.add(rec.recon_error);
          energy.add(rec.energy);
          duration.add(rec.duration);
        }
      }
    }
    if (recon.values.empty())
      throw NumericalError("sweep: every trial failed for waypoint size " +
                           std::to_string(size));
    SweepSizeSummary summary;
    summary.size = size;
    summary.trials = static_cast<int>(recon.values.size());
    summary.failures = failures;
    summary.mean_recon = recon.mean();
    summary.sigma_recon = recon.sigma();
    summary.mean_energy = energy.mean();
    summary.sigma_energy = energy.sigma();
    summary.mean_duration = duration.mean();
    summary.sigma_duration = duration.sigma();
    report.summaries.push_back(summary);
  }
  return report;
}

StageArtifacts run_sweep(const PipelineConfig& config) {
  std::vector<int> sizes = config.sweep_sizes;
  if (sizes.empty()) {
    sizes.resize(10);
    for (int i = 0; i < 10; ++i) sizes[static_cast<size_t>(i)] = i + 1;
  }
  const SweepReport report = sweep(config, sizes, config.sweep_sets, config.sweep_shuffles);

  ensure_dir(config.output_dir);
  StageArtifacts out;
  {
    std::ofstream raw(config.output_dir / "sweep_raw.csv");
    raw << "size,set,shuffle,failed,converged,recon_error,energy,duration\n";
    for (const SweepRecord& r : report.records) {
      raw << r.size << ',' << r.set_index << ',' << r.shuffle_index << ',' << (r.failed ? 1 : 0)
          << ',' << (r.converged ? 1 : 0) << ',' << format_double(r.recon_error) << ','
          << format_double(r.energy) << ',' << format_double(r.duration) << "\n";
    }
  }
  out.files.push_back(config.output_dir / "sweep_raw.csv");
  {
    std::ofstream summary(config.output_dir / "sweep_summary.csv");
    summary << "size,trials,failures,mean_recon,sigma_recon,mean_energy,sigma_energy,"
               "mean_duration,sigma_duration\n";
    for (const SweepSizeSummary& s : report.summaries) {
      summary << s.size << ',' << s.trials << ',' << s.failures << ','
              << format_double(s.mean_recon) << ',' << format_double(s.sigma_recon) << ','
              << format_double(s.mean_energy) << ',' << format_double(s.sigma_energy) << ','
              << format_double(s.mean_duration) << ',' << format_double(s.sigma_duration)
              << "\n";
    }
  }
  out.files.push_back(config.output_dir / "sweep_summary.csv");
  return out;
}

PlotKind parse_plot_kind(const std::string& name) {
  if (name == "field-map") return PlotKind::field_map;
  if (name == "error-map") return PlotKind::error_map;
  if (name == "trajectory-overlay") return PlotKind::trajectory_overlay;
  if (name == "sweep-bars") return PlotKind::sweep_bars;
  throw ValidationError("export: unknown plot kind \"" + name + "\"");
}

StageArtifacts export_plot_data(const PipelineConfig& config, PlotKind kind) {
  config.validate();
  const std::filesystem::path dir = config.output_dir;
  StageArtifacts out;

  switch (kind) {
    case PlotKind::field_map: {
      const Eigen::VectorXd estimate = read_vector(dir / "recon_estimate.bin");
      write_field_map_csv(dir / "plot_field_u.csv", estimate, config.grid, 0);
      write_field_map_csv(dir / "plot_field_v.csv", estimate, config.grid, 1);
      out.files.push_back(dir / "plot_field_u.csv");
      out.files.push_back(dir / "plot_field_v.csv");
      break;
    }
    case PlotKind::error_map: {
      const Eigen::VectorXd estimate = read_vector(dir / "recon_estimate.bin");
      const Eigen::VectorXd reference = read_vector(dir / "recon_reference.bin");
      const Eigen::VectorXd diff = (estimate - reference).cwiseAbs();
      write_field_map_csv(dir / "plot_error_u.csv", diff, config.grid, 0);
      write_field_map_csv(dir / "plot_error_v.csv", diff, config.grid, 1);
      out.files.push_back(dir / "plot_error_u.csv");
      out.files.push_back(dir / "plot_error_v.csv");
      break;
    }
    case PlotKind::trajectory_overlay: {
      const Trajectory traj = trajectory_from_json(load_json_file(dir / "trajectory.json"));
      {
        std::ofstream path_csv(dir / "plot_trajectory.csv");
        path_csv << "t,x,y\n";
        for (int i = 0; i < traj.positions.cols(); ++i)
          path_csv << format_double(traj.timestamps[static_cast<size_t>(i)]) << ','
                   << format_double(traj.positions(0, i)) << ','
                   << format_double(traj.positions(1, i)) << "\n";
      }
      out.files.push_back(dir / "plot_trajectory.csv");
      {
        const json wp = load_json_file(dir / "waypoints.json");
        std::ofstream markers(dir / "plot_markers.csv");
        markers << "kind,x,y\n";
        markers << "start," << format_double(config.start.x()) << ','
                << format_double(config.start.y()) << "\n";
        markers << "goal," << format_double(config.goal.x()) << ','
                << format_double(config.goal.y()) << "\n";
        for (const auto& p : wp.at("positions"))
          markers << "waypoint," << format_double(p.at(0).get<double>()) << ','
                  << format_double(p.at(1).get<double>()) << "\n";
      }
      out.files.push_back(dir / "plot_markers.csv");
      break;
    }
    case PlotKind::sweep_bars: {
      std::ifstream in(dir / "sweep_summary.csv");
      if (!in) throw ValidationError("export: missing artifact " + (dir / "sweep_summary.csv").string());
      std::string header;
      std::getline(in, header);
      std::ofstream bars(dir / "plot_sweep_bars.csv");
      bars << "size,metric,mean,sigma\n";
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        for (const char c : line) {
          if (c == ',') {
            cells.push_back(cell);
            cell.clear();
          } else {
            cell += c;
          }
        }
        cells.push_back(cell);
        if (cells.size() != 9) throw ValidationError("export: malformed sweep summary row");
        bars << cells[0] << ",recon," << cells[3] << ',' << cells[4] << "\n";
        bars << cells[0] << ",energy," << cells[5] << ',' << cells[6] << "\n";
        bars << cells[0] << ",duration," << cells[7] << ',' << cells[8] << "\n";
      }
      out.files.push_back(dir / "plot_sweep_bars.csv");
      break;
    }
  }
  return out;
}

}  // namespace dcsflow
