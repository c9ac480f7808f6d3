#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "autorobust/core/errors.hpp"
#include "autorobust/harness/harness.hpp"

using namespace autorobust;
namespace fs = std::filesystem;

namespace {

enum Exit { ok = 0, failure = 1, invalid = 2, numeric = 3 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> jobs;
  std::string ledger;
};

void print_summary(const harness::ojson& rec) {
  std::printf("%s record %s (results %s)\n", rec["kind"].get<std::string>().c_str(),
              rec["record_hash"].get<std::string>().c_str(), rec["result_hash"].get<std::string>().c_str());
  for (const auto& r : rec["results"]) {
    const auto seed = r["seed"].get<std::uint64_t>();
    if (r.contains("attack"))
      std::printf("  seed %llu: robust_acc %.4f cost_units %llu\n", static_cast<unsigned long long>(seed),
                  r["attack"]["robust_acc"].get<double>(),
                  static_cast<unsigned long long>(r["attack"]["cost_units"].get<std::uint64_t>()));
    if (r.contains("transfer"))
      for (const auto& t : r["transfer"])
        std::printf("    -> %s: robust_acc %.4f\n", t["target"].get<std::string>().c_str(), t["robust_acc"].get<double>());
    if (r.contains("search"))
      std::printf("  seed %llu: best_fitness %.4f\n", static_cast<unsigned long long>(seed),
                  r["search"]["best_fitness"].get<double>());
    if (r.contains("report")) {
      std::printf("  seed %llu: clean %.4f", static_cast<unsigned long long>(seed), r["report"]["clean_acc"].get<double>());
      for (const auto& [name, v] : r["report"]["accuracies"].items()) std::printf(" %s %.4f", name.c_str(), v.get<double>());
      std::printf("\n");
    }
  }
}

int run_kind(harness::Kind kind, const Options& o) {
  if (o.config.empty()) throw ValidationError("--config is required");
  auto c = harness::load_config(o.config);
  if (c.kind != kind)
    throw ValidationError("config kind is " + harness::kind_name(c.kind) + " but the subcommand runs " +
                          harness::kind_name(kind));
  c = harness::with_overrides(c, o.seed, o.out, o.jobs);
  print_summary(harness::run_experiment(c));
  return ok;
}

int run_report(const Options& o) {
  std::string ledger = o.ledger;
  if (ledger.empty() && !o.config.empty()) ledger = (fs::path(harness::load_config(o.config).output_dir) / "ledger.jsonl").string();
  if (ledger.empty()) throw ValidationError("report needs --ledger or --config");
  if (!fs::exists(ledger)) throw ValidationError("ledger not found: " + ledger);
  const std::string broken = harness::verify_ledger(ledger);
  if (!broken.empty()) throw ValidationError("ledger " + ledger + " failed verification: " + broken);
  const std::string out = o.out ? *o.out : fs::path(ledger).parent_path().string();
  const auto recs = harness::read_ledger(ledger);
  harness::write_report(recs, out.empty() ? "." : out);
  std::printf("%zu records verified; wrote %s/report.csv and report.svg\n", recs.size(), out.empty() ? "." : out.c_str());
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robustness search and evaluation runner"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (JSON)");
    sub->add_option("--seed", o.seed, "run this single seed instead of the config's list");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
  };
  struct Entry {
    const char* name;
    const char* help;
    harness::Kind kind;
  };
  const Entry entries[] = {
      {"attack-search", "search an attack scheme against a trained model", harness::Kind::attack_search},
      {"arch-search", "search a cell architecture", harness::Kind::arch_search},
      {"evaluate", "train a model and report robustness under noise sources", harness::Kind::evaluate},
      {"circuit-defense", "search an architecture scored against a stored attack scheme", harness::Kind::circuit_defense},
      {"circuit-attack", "search an attack on one architecture and transfer it to others", harness::Kind::circuit_attack},
  };
  std::vector<std::pair<CLI::App*, harness::Kind>> subs;
  for (const auto& e : entries) {
    auto* s = app.add_subcommand(e.name, e.help);
    add_common(s);
    subs.emplace_back(s, e.kind);
  }
  auto* report = app.add_subcommand("report", "verify a ledger and render report.csv / report.svg");
  add_common(report);
  report->add_option("--ledger", o.ledger, "ledger.jsonl to read");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return invalid;
  }

  try {
    if (report->parsed()) return run_report(o);
    for (const auto& [s, kind] : subs)
      if (s->parsed()) return run_kind(kind, o);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return numeric;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return invalid;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return invalid;
  } catch (const ArgumentError& e) {
    std::fprintf(stderr, "invalid argument: %s\n", e.what());
    return invalid;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return invalid;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return failure;
  }
  return failure;
}
