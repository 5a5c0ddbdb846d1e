#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "vsd/evaluation.hpp"
#include "vsd/ingest.hpp"

using namespace vsd;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(VSD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("cli: unknown subcommand exits with the usage code") {
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("--help") == 0);
}

TEST_CASE("cli: record without a reachable server fails without touching the pipeline") {
  const fs::path out = fs::temp_directory_path() / "vsd_cli_record";
  fs::remove_all(out);
  CHECK(run_cli("record --host 127.0.0.1 --port 1 --timeout 2 --pose-tag 3m45 --out " + out.string()) == 1);
  long n_files = 0;
  if (fs::exists(out))
    for (auto it = fs::recursive_directory_iterator(out); it != fs::recursive_directory_iterator(); ++it)
      if (it->is_regular_file()) ++n_files;
  CHECK(n_files == 0);
  fs::remove_all(out);
}

TEST_CASE("cli: generate, split, train, eval, report chain on a small run") {
  const fs::path root = fs::temp_directory_path() / "vsd_cli_chain";
  fs::remove_all(root);
  fs::create_directories(root);

  // small dataset, then a reduced clip/epoch budget for the chain
  CHECK(run_cli("generate --preset desk --n-per-pose 6 --seed 3 --jobs 2 --out " +
                (root / "dataset").string()) == 0);
  CHECK(fs::exists(root / "dataset" / "manifest.csv"));
  const auto manifest = ingest::read_manifest(root / "dataset" / "manifest.csv");
  CHECK(manifest.entries.size() == 12);

  CHECK(run_cli("split --manifest " + (root / "dataset" / "manifest.csv").string() + " --seed 4 --out " +
                (root / "splits.json").string()) == 0);
  const auto splits = ingest::load_splits(root / "splits.json");
  CHECK(splits.per_pose.size() == 2);
  CHECK(splits.holistic.train.size() == 8);

  {
    std::ofstream cfg(root / "train.json");
    cfg << R"({"max_epochs": 6, "early_stop_patience": 6, "seed": 9})";
  }
  CHECK(run_cli("train --manifest " + (root / "dataset" / "manifest.csv").string() + " --split " +
                (root / "splits.json").string() + " --poses all --clip 8,28,28 --config " +
                (root / "train.json").string() + " --jobs 2 --out " + (root / "models").string()) == 0);
  CHECK(fs::exists(root / "models" / "3m45.ckpt"));
  CHECK(fs::exists(root / "models" / "4m60.ckpt"));
  CHECK(fs::exists(root / "models" / "holistic.ckpt"));
  CHECK(fs::exists(root / "models" / "holistic_history.csv"));

  CHECK(run_cli("eval --checkpoint " + (root / "models").string() + " --manifest " +
                (root / "dataset" / "manifest.csv").string() + " --split " + (root / "splits.json").string() +
                " --out " + (root / "report").string()) == 0);
  CHECK(fs::exists(root / "report" / "eval.json"));
  CHECK(fs::exists(root / "report" / "per_dataset_mae.csv"));
  CHECK(fs::exists(root / "report" / "summary.png"));

  // re-emit from the saved eval
  CHECK(run_cli("report --eval " + (root / "report" / "eval.json").string() + " --out " +
                (root / "report2").string()) == 0);
  CHECK(fs::exists(root / "report2" / "per_dataset_mae.csv"));

  const auto report = evaluation::EvalReport::load(root / "report" / "eval.json");
  CHECK(report.models.size() == 3);
  fs::remove_all(root);
}

TEST_SUITE_END();
