// Python bindings for the main pipeline operations.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dcsflow/errors.hpp"
#include "dcsflow/flow.hpp"
#include "dcsflow/pipeline.hpp"
#include "dcsflow/pod.hpp"
#include "dcsflow/reconstruct.hpp"
#include "dcsflow/sparse.hpp"
#include "dcsflow/trajopt.hpp"

namespace py = pybind11;
using namespace dcsflow;

namespace {

MeasurementKind parse_kind(const std::string& name) {
  if (name == "delta-impulse") return MeasurementKind::delta_impulse;
  if (name == "gaussian") return MeasurementKind::gaussian;
  if (name == "bernoulli") return MeasurementKind::bernoulli;
  throw ValidationError("unknown measurement kind \"" + name + "\"");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dynamic compressed sensing of unsteady flow fields";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

  py::class_<DoubleGyreParams>(m, "DoubleGyreParams")
      .def(py::init<>())
      .def(py::init([](double amplitude, double epsilon, double omega) {
             DoubleGyreParams p{amplitude, epsilon, omega};
             p.validate();
             return p;
           }),
           py::arg("amplitude") = 0.1, py::arg("epsilon") = 0.25,
           py::arg("omega") = 2.0 * std::numbers::pi / 10.0)
      .def_readwrite("amplitude", &DoubleGyreParams::amplitude)
      .def_readwrite("epsilon", &DoubleGyreParams::epsilon)
      .def_readwrite("omega", &DoubleGyreParams::omega)
      .def("speed_bound", &DoubleGyreParams::speed_bound);

  py::class_<GridSpec>(m, "GridSpec")
      .def(py::init([](int nx, int ny) {
             GridSpec g;
             g.nx = nx;
             g.ny = ny;
             g.validate();
             return g;
           }),
           py::arg("nx") = 50, py::arg("ny") = 25)
      .def_readonly("nx", &GridSpec::nx)
      .def_readonly("ny", &GridSpec::ny)
      .def("node_count", &GridSpec::node_count)
      .def("node_position", &GridSpec::node_position);

  py::class_<TimeGrid>(m, "TimeGrid")
      .def(py::init([](double t0, double dt, int count) {
             TimeGrid t{t0, dt, count};
             t.validate();
             return t;
           }),
           py::arg("t0") = 0.0, py::arg("dt") = 0.01, py::arg("count") = 2001)
      .def_readonly("t0", &TimeGrid::t0)
      .def_readonly("dt", &TimeGrid::dt)
      .def_readonly("count", &TimeGrid::count);

  m.def("stream_function", &stream_function, py::arg("p"), py::arg("t"), py::arg("params"));
  m.def("velocity", &velocity, py::arg("p"), py::arg("t"), py::arg("params"));

  py::class_<SnapshotMatrix>(m, "SnapshotMatrix")
      .def_readonly("data", &SnapshotMatrix::data)
      .def_readonly("mean_field", &SnapshotMatrix::mean_field)
      .def_readonly("grid", &SnapshotMatrix::grid);

  m.def("build_snapshot_matrix", &build_snapshot_matrix, py::arg("grid"), py::arg("times"),
        py::arg("params"));

  py::class_<PodBasis>(m, "PodBasis")
      .def_readonly("modes", &PodBasis::modes)
      .def_readonly("energies", &PodBasis::energies)
      .def_readonly("mean_field", &PodBasis::mean_field)
      .def_readonly("rank_deficient", &PodBasis::rank_deficient)
      .def("rank", &PodBasis::rank);

  const auto make_truncation = [](int mode_count, double energy_fraction) {
    return mode_count > 0 ? PodTruncation::by_count(mode_count)
                          : PodTruncation::by_energy(energy_fraction);
  };
  m.def(
      "pod_svd",
      [make_truncation](const SnapshotMatrix& snaps, int mode_count, double energy_fraction) {
        return pod_svd(snaps, make_truncation(mode_count, energy_fraction));
      },
      py::arg("snapshots"), py::arg("mode_count") = 0, py::arg("energy_fraction") = 0.999);
  m.def(
      "pod_covariance",
      [make_truncation](const SnapshotMatrix& snaps, int mode_count, double energy_fraction) {
        return pod_covariance(snaps, make_truncation(mode_count, energy_fraction));
      },
      py::arg("snapshots"), py::arg("mode_count") = 0, py::arg("energy_fraction") = 0.999);
  m.def("temporal_coefficients", &temporal_coefficients, py::arg("basis"), py::arg("snapshots"));
  m.def("mode_values_at", &mode_values_at, py::arg("basis"), py::arg("p"));

  py::class_<SparseSolution>(m, "SparseSolution")
      .def_readonly("coefficients", &SparseSolution::coefficients)
      .def_readonly("residual", &SparseSolution::residual)
      .def_readonly("iterations", &SparseSolution::iterations)
      .def_readonly("converged", &SparseSolution::converged)
      .def_readonly("gamma_final", &SparseSolution::gamma_final);

  m.def(
      "random_measurement_matrix",
      [](const std::string& kind, int m_rows, int n_cols, std::uint64_t seed) {
        const MeasurementMatrix mm = random_measurement_matrix(parse_kind(kind), m_rows, n_cols, seed);
        if (mm.kind == MeasurementKind::delta_impulse) {
          Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(mm.rows, mm.cols);
          for (int r = 0; r < mm.rows; ++r) dense(r, mm.impulse_cols[static_cast<size_t>(r)]) = 1.0;
          return dense;
        }
        return mm.dense;
      },
      py::arg("kind"), py::arg("m"), py::arg("n"), py::arg("seed"));
  m.def("solve_basis_pursuit",
        [](const Eigen::MatrixXd& theta, const Eigen::VectorXd& y, double eps_noise,
           double gamma) { return solve_basis_pursuit(theta, y, eps_noise, gamma); },
        py::arg("theta"), py::arg("y"), py::arg("eps_noise") = 0.0, py::arg("gamma") = 0.0);

  py::class_<WaypointSet>(m, "WaypointSet")
      .def_readonly("m", &WaypointSet::m)
      .def_readonly("ids", &WaypointSet::ids)
      .def_readonly("recon_error", &WaypointSet::recon_error)
      .def_readonly("best_trial", &WaypointSet::best_trial)
      .def_readonly("trial_errors", &WaypointSet::trial_errors);

  m.def(
      "select_waypoints",
      [](const SnapshotMatrix& snaps, const PodBasis& basis, int m_count, int c1,
         std::uint64_t seed) { return select_waypoints(snaps, basis, m_count, c1, seed); },
      py::arg("snapshots"), py::arg("basis"), py::arg("m"), py::arg("c1"), py::arg("seed"));
  m.def(
      "score_waypoint_set",
      [](const std::vector<int>& ids, const PodBasis& basis, const SnapshotMatrix& snaps) {
        return score_waypoint_set(ids, basis, snaps).error;
      },
      py::arg("ids"), py::arg("basis"), py::arg("snapshots"));

  py::class_<CostBreakdown>(m, "CostBreakdown")
      .def_readonly("duration", &CostBreakdown::duration)
      .def_readonly("recon_error", &CostBreakdown::recon_error)
      .def_readonly("energy", &CostBreakdown::energy)
      .def_readonly("total", &CostBreakdown::total);

  py::class_<Trajectory>(m, "Trajectory")
      .def_property_readonly("timestamps",
                             [](const Trajectory& t) { return t.timestamps; })
      .def_readonly("positions", &Trajectory::positions)
      .def_readonly("velocities", &Trajectory::velocities)
      .def("duration", &Trajectory::duration);

  m.def(
      "plan_trajectory",
      [](const std::vector<Vec2>& waypoints, const Vec2& start, const Vec2& goal,
         const SnapshotMatrix& snaps, const PodBasis& basis, const DoubleGyreParams& params,
         double speed_max, double w_duration, double w_recon, double w_energy, int max_inner) {
        const DoubleGyreSampler truth(params, snaps);
        TrajectoryLimits limits;
        limits.speed_max = speed_max;
        limits.x_bounds = snaps.grid.x_range;
        limits.y_bounds = snaps.grid.y_range;
        CostWeights weights{w_duration, w_recon, w_energy};
        OptimizeOptions opts;
        opts.max_inner = max_inner;
        const OptimizationResult result =
            optimize_trajectory(waypoints, start, goal, basis, truth, weights, limits, opts);
        return py::make_tuple(result.trajectory, result.cost, result.converged);
      },
      py::arg("waypoints"), py::arg("start"), py::arg("goal"), py::arg("snapshots"),
      py::arg("basis"), py::arg("params"), py::arg("speed_max") = 0.7,
      py::arg("w_duration") = 1.0, py::arg("w_recon") = 1.0, py::arg("w_energy") = 1.0,
      py::arg("max_inner") = 120);

  m.def(
      "run_pipeline",
      [](const std::filesystem::path& config_path, const std::filesystem::path& out,
         std::uint64_t seed) {
        PipelineConfig config = PipelineConfig::load(config_path);
        if (!out.empty()) config.output_dir = out;
        if (seed != 0) config.seed = seed;
        std::vector<std::string> files;
        for (const auto& p : run_pipeline(config).files) files.push_back(p.string());
        return files;
      },
      py::arg("config_path"), py::arg("out") = std::filesystem::path(), py::arg("seed") = 0);
}
