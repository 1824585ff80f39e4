// tabfids: federated intrusion-detection simulator.
//
//   tabfids gen-data --config synth.json --out data/
//   tabfids run      --config run.json [--set key=value ...]
//   tabfids ddfe     --config run.json --checkpoint out/checkpoints/node0.ftw --node 0
//   tabfids report   out/
//
// Exit codes: 0 ok, 1 config error, 2 data error, 3 runtime failure.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tabfids/tabfids.hpp"

namespace {

using tabfids::ExitCode;
namespace fs = std::filesystem;

nlohmann::json load_with_overrides(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json j = path.empty() ? nlohmann::json::object() : tabfids::load_json_file(path);
  tabfids::apply_overrides(j, overrides);
  return j;
}

fs::path config_dir(const std::string& path) {
  return path.empty() ? fs::path{} : fs::path(path).parent_path();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated intrusion detection simulator with transferability reports"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset, schema and ground truth");
  gen->add_option("--config", config_path, "Synthetic spec (JSON)");
  gen->add_option("--set", overrides, "Override a spec key, e.g. --set attacks=5");
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* run = app.add_subcommand("run", "Run the full pipeline from a config");
  run->add_option("--config", config_path, "Run config (JSON)")->required();
  run->add_option("--set", overrides, "Override a config key, e.g. --set train.rounds=5");
  run->add_option("--out", out_dir, "Output directory (overrides output_dir)");

  std::string checkpoint;
  std::size_t node = 0;
  double epsilon = -1.0;
  auto* ddfe = app.add_subcommand("ddfe", "Feature elimination on a trained node model");
  ddfe->add_option("--config", config_path, "Run config the checkpoint came from")->required();
  ddfe->add_option("--set", overrides, "Override a config key");
  ddfe->add_option("--checkpoint", checkpoint, "Node checkpoint (FTW1)")->required()->check(CLI::ExistingFile);
  ddfe->add_option("--node", node, "Node index the checkpoint belongs to");
  ddfe->add_option("--epsilon", epsilon, "Elimination threshold (default: config ddfe.epsilon)");
  ddfe->add_option("--out", out_dir, "Output directory")->required();

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Verify a run directory and print its summary");
  report->add_option("dir", report_dir, "Run output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      auto j = load_with_overrides(config_path, overrides);
      auto spec = tabfids::SyntheticSpec::from_json(j);
      auto result = tabfids::cmd_gen_data(spec, out_dir);
      std::cout << "wrote " << result.rows << " rows to " << result.csv.string() << "\n";
    } else if (*run) {
      auto j = load_with_overrides(config_path, overrides);
      if (!out_dir.empty()) j["output_dir"] = out_dir;
      const auto cfg = tabfids::parse_run_config(j, config_dir(config_path));
      const auto outcome = tabfids::cmd_run(cfg, j);
      std::cout << tabfids::kSummaryHeader << "\n"
                << tabfids::summary_row(cfg.display_label(), outcome.summary) << "\n"
                << "outputs in " << outcome.output_dir.string() << "\n";
    } else if (*ddfe) {
      auto j = load_with_overrides(config_path, overrides);
      const auto cfg = tabfids::parse_run_config(j, config_dir(config_path));
      const double eps = epsilon >= 0.0 ? epsilon : cfg.ddfe_epsilon;
      const auto result = tabfids::cmd_ddfe(cfg, checkpoint, node, eps, out_dir);
      std::cout << "eliminated " << result.mask.eliminated() << " of " << result.mask.features()
                << " features; attack accuracy " << tabfids::fixed4(result.baseline) << " -> "
                << tabfids::fixed4(result.finetuned_accuracy) << "\n";
    } else if (*report) {
      std::cout << tabfids::cmd_report(report_dir);
    }
  } catch (const tabfids::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const tabfids::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kRuntime);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kRuntime);
  }
  return 0;
}
