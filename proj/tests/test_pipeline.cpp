#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dcsflow/errors.hpp"
#include "dcsflow/io.hpp"
#include "dcsflow/pipeline.hpp"
#include "helpers.hpp"

using namespace dcsflow;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json tiny_config_json() {
  return json{
      {"seed", 11},
      {"grid", {{"nx", 9}, {"ny", 5}}},
      {"time", {{"dt", 0.1}, {"count", 41}}},
      {"pod", {{"mode_count", 3}}},
      {"selection", {{"waypoint_count", 2}, {"trial_count", 3}}},
      {"trajectory",
       {{"start", {0.25, 0.25}},
        {"goal", {1.75, 0.75}},
        {"steps_per_segment", 5},
        {"shuffle_trials", 2},
        {"window", 10},
        {"max_outer", 2},
        {"max_inner", 8}}},
  };
}

PipelineConfig tiny_config(const fs::path& out) {
  json j = tiny_config_json();
  j["output_dir"] = out.string();
  return PipelineConfig::from_json(j);
}

std::map<std::string, std::string> hash_artifacts(const StageArtifacts& artifacts) {
  std::map<std::string, std::string> hashes;
  for (const auto& path : artifacts.files) hashes[path.filename().string()] = file_hash_hex(path);
  return hashes;
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("defaults load from an empty document") {
    const PipelineConfig config = PipelineConfig::from_json(json::object());
    CHECK(config.grid.nx == 50);
    CHECK(config.times.count == 2001);
    CHECK(config.waypoint_count == 5);
    CHECK(config.shuffle_trials == 7);
  }

  SUBCASE("unknown keys are rejected at every level") {
    json top = json::object();
    top["surprise"] = 1;
    CHECK_THROWS_AS(PipelineConfig::from_json(top), ValidationError);

    json nested = json{{"flow", {{"amplitude", 0.1}, {"vorticity", 2.0}}}};
    CHECK_THROWS_AS(PipelineConfig::from_json(nested), ValidationError);
  }

  SUBCASE("waypoint counts beyond the grid fail before any computation") {
    json j = json{{"grid", {{"nx", 3}, {"ny", 3}}},
                  {"selection", {{"waypoint_count", 9}}}};
    CHECK_THROWS_AS(PipelineConfig::from_json(j), ValidationError);
  }

  SUBCASE("bad enum strings are rejected") {
    CHECK_THROWS_AS(PipelineConfig::from_json(json{{"pod", {{"flavor", "qr"}}}}),
                    ValidationError);
    CHECK_THROWS_AS(
        PipelineConfig::from_json(json{{"trajectory", {{"accumulation", "sometimes"}}}}),
        ValidationError);
  }

  SUBCASE("round trips through json") {
    const PipelineConfig config = PipelineConfig::from_json(tiny_config_json());
    const PipelineConfig again = PipelineConfig::from_json(config.to_json());
    CHECK(config.hash() == again.hash());
  }
}

TEST_CASE("binary matrix files round-trip bit-exactly") {
  const fs::path dir = fs::temp_directory_path() / "dcsflow_io_test";
  fs::create_directories(dir);
  Eigen::MatrixXd m(5, 3);
  std::mt19937_64 engine(4);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(engine);

  write_matrix(dir / "m.bin", m);
  const Eigen::MatrixXd back = read_matrix(dir / "m.bin");
  CHECK(back.rows() == m.rows());
  CHECK(back.cols() == m.cols());
  CHECK((back - m).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(read_matrix(dir / "missing.bin"), ValidationError);
  {
    std::ofstream bad(dir / "bad.bin", std::ios::binary);
    bad << "NOPE";
  }
  CHECK_THROWS_AS(read_matrix(dir / "bad.bin"), ValidationError);
  fs::remove_all(dir);
}

TEST_CASE("field map layout") {
  GridSpec grid;
  grid.nx = 4;
  grid.ny = 3;
  Eigen::VectorXd field(2 * grid.node_count());
  for (int i = 0; i < field.size(); ++i) field(i) = i;
  const fs::path path = fs::temp_directory_path() / "dcsflow_map.csv";
  write_field_map_csv(path, field, grid, 0);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header.find("nx,4") != std::string::npos);
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    CHECK(std::count(line.begin(), line.end(), ',') == grid.nx - 1);
    ++rows;
  }
  CHECK(rows == grid.ny);
  fs::remove(path);
}

TEST_CASE("full pipeline run") {
  const fs::path out = fs::temp_directory_path() / "dcsflow_run_test";
  fs::remove_all(out);
  const PipelineConfig config = tiny_config(out);
  const StageArtifacts artifacts = run_pipeline(config);

  SUBCASE("expected artifacts exist") {
    for (const char* name :
         {"snapshot.bin", "snapshot_mean.bin", "snapshot.csv", "basis.bin", "basis.json",
          "waypoints.json", "trajectory.csv", "trajectory.json", "recon_summary.json",
          "manifest.json"}) {
      CHECK(fs::exists(out / name));
    }
  }

  SUBCASE("manifest lists every artifact with its content hash") {
    std::ifstream in(out / "manifest.json");
    json manifest;
    in >> manifest;
    CHECK(manifest.at("config_hash").get<std::string>() == config.hash());
    for (const auto& entry : manifest.at("files")) {
      const fs::path path = out / entry.at("path").get<std::string>();
      CHECK(fs::exists(path));
      CHECK(entry.at("fnv1a64").get<std::string>() == file_hash_hex(path));
    }
    // Every written file (except the manifest itself) is listed.
    CHECK(manifest.at("files").size() == artifacts.files.size() - 1);
  }

  SUBCASE("reruns are byte-identical") {
    const auto first = hash_artifacts(artifacts);
    const StageArtifacts again = run_pipeline(config);
    CHECK(first == hash_artifacts(again));
  }

  SUBCASE("the manifest's embedded config re-runs to identical artifacts") {
    std::ifstream in(out / "manifest.json");
    json manifest;
    in >> manifest;
    PipelineConfig embedded = PipelineConfig::from_json(manifest.at("config"));
    const fs::path other = fs::temp_directory_path() / "dcsflow_run_test_replay";
    fs::remove_all(other);
    embedded.output_dir = other;
    const StageArtifacts replay = run_pipeline(embedded);
    auto original = hash_artifacts(artifacts);
    auto replayed = hash_artifacts(replay);
    original.erase("manifest.json");  // embeds the differing output_dir
    replayed.erase("manifest.json");
    CHECK(original == replayed);
    fs::remove_all(other);
  }

  fs::remove_all(out);
}

TEST_CASE("sweep aggregation") {
  const fs::path out = fs::temp_directory_path() / "dcsflow_sweep_test";
  fs::remove_all(out);
  PipelineConfig config = tiny_config(out);
  config.waypoint_trials = 2;
  config.optimizer.max_inner = 5;
  config.optimizer.max_outer = 1;

  SUBCASE("record counts and the sample-sigma convention") {
    const SweepReport report = sweep(config, {1, 2}, 2, 2);
    CHECK(report.records.size() == 8);  // 2 sizes x 2 sets x 2 shuffles
    CHECK(report.summaries.size() == 2);
    for (const auto& summary : report.summaries) {
      CHECK(summary.trials == 4);
      // Oracle: recompute mean and sigma from the raw records.
      double mean = 0.0;
      int n = 0;
      for (const auto& rec : report.records)
        if (rec.size == summary.size && !rec.failed) {
          mean += rec.recon_error;
          ++n;
        }
      mean /= n;
      double var = 0.0;
      for (const auto& rec : report.records)
        if (rec.size == summary.size && !rec.failed)
          var += (rec.recon_error - mean) * (rec.recon_error - mean);
      const double sigma = std::sqrt(var / (n - 1));
      CHECK(summary.mean_recon == doctest::Approx(mean).epsilon(1e-12));
      CHECK(summary.sigma_recon == doctest::Approx(sigma).epsilon(1e-12));
    }
  }

  SUBCASE("a single trial reports sigma zero with n = 1") {
    const SweepReport report = sweep(config, {1}, 1, 1);
    CHECK(report.summaries.size() == 1);
    CHECK(report.summaries[0].trials == 1);
    CHECK(report.summaries[0].sigma_recon == 0.0);
    CHECK(report.records.size() == 1);
    CHECK(report.records[0].recon_error ==
          doctest::Approx(report.summaries[0].mean_recon).epsilon(1e-15));
  }

  fs::remove_all(out);
}

TEST_CASE("plot exports") {
  const fs::path out = fs::temp_directory_path() / "dcsflow_export_test";
  fs::remove_all(out);
  PipelineConfig config = tiny_config(out);
  run_pipeline(config);

  SUBCASE("field maps have the grid shape") {
    const StageArtifacts files = export_plot_data(config, PlotKind::field_map);
    CHECK(files.files.size() == 2);
    std::ifstream in(out / "plot_field_u.csv");
    std::string line;
    std::getline(in, line);  // axis header
    int rows = 0;
    while (std::getline(in, line))
      if (!line.empty()) ++rows;
    CHECK(rows == config.grid.ny);
  }

  SUBCASE("a perfect reconstruction exports an all-zero error map") {
    const Eigen::VectorXd reference = read_vector(out / "recon_reference.bin");
    write_vector(out / "recon_estimate.bin", reference);
    export_plot_data(config, PlotKind::error_map);
    std::ifstream in(out / "plot_error_u.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::stringstream row(line);
      std::string cell;
      while (std::getline(row, cell, ',')) CHECK(std::stod(cell) == 0.0);
    }
  }

  SUBCASE("trajectory overlays carry markers for start, goal, and waypoints") {
    export_plot_data(config, PlotKind::trajectory_overlay);
    std::ifstream markers(out / "plot_markers.csv");
    std::string line;
    std::getline(markers, line);
    int starts = 0, goals = 0, waypoints = 0;
    while (std::getline(markers, line)) {
      if (line.rfind("start,", 0) == 0) ++starts;
      if (line.rfind("goal,", 0) == 0) ++goals;
      if (line.rfind("waypoint,", 0) == 0) ++waypoints;
    }
    CHECK(starts == 1);
    CHECK(goals == 1);
    CHECK(waypoints == config.waypoint_count);
  }

  SUBCASE("sweep bars reshape the summary") {
    PipelineConfig sweep_config = config;
    sweep_config.waypoint_trials = 2;
    sweep_config.optimizer.max_inner = 5;
    sweep_config.sweep_sizes = {1};
    sweep_config.sweep_sets = 1;
    sweep_config.sweep_shuffles = 1;
    run_sweep(sweep_config);
    export_plot_data(sweep_config, PlotKind::sweep_bars);
    std::ifstream bars(out / "plot_sweep_bars.csv");
    std::string line;
    std::getline(bars, line);
    int rows = 0;
    while (std::getline(bars, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 3);  // one row per metric
  }

  SUBCASE("unknown kinds are rejected") {
    CHECK_THROWS_AS(parse_plot_kind("heatmap"), ValidationError);
  }

  fs::remove_all(out);
}
