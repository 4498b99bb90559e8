#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hjreduce/config.hpp"
#include "hjreduce/pipelines.hpp"

using namespace hjreduce;

namespace {

void print_table(const pipelines::Outcome& out, const std::string& pipeline) {
  std::size_t width = 0;
  for (const auto& [k, v] : out.summary) width = std::max(width, k.size());
  std::cout << pipeline << '\n';
  for (const auto& [k, v] : out.summary) std::cout << "  " << k << std::string(width - k.size() + 2, ' ') << v << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hamilton-Jacobi model reduction runner"};
  app.require_subcommand(1);
  std::string config_path;
  std::size_t seed_factor = 0;
  bool quiet = false;

  const std::vector<std::string> names = {"run", "newton", "manifold", "hj", "helmholtz", "wave", "action", "verify"};
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name, name == "run" ? "pipeline named by the config's module field"
                                                       : "run the " + name + " pipeline");
    sub->add_option("--config", config_path, "scenario config (JSON)")->required();
    sub->add_option("--seed-factor", seed_factor, "characteristic seeds per grid node and axis")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--quiet", quiet, "suppress the summary table");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  std::string pipeline = app.get_subcommands().front()->get_name();
  config::Config cfg;
  try {
    cfg = config::load(config_path);
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  if (pipeline == "run") pipeline = cfg.module;

  pipelines::Options opt;
  if (seed_factor > 0) opt.seed_factor = seed_factor;
  try {
    const auto out = pipelines::run(pipeline, cfg, opt);
    if (!out.report.empty()) std::cout << out.report;
    if (!quiet) print_table(out, pipeline);
    return out.exit_code;
  } catch (const Error& e) {
    std::cerr << to_string(e.kind()) << ": " << e.what() << '\n';
    if (e.record()) {
      const auto& r = *e.record();
      std::cerr << "  time " << io::number(r.time);
      if (!r.node.empty()) {
        std::cerr << "  node";
        for (double x : r.node) std::cerr << ' ' << io::number(x);
      }
      if (!std::isnan(r.determinant)) std::cerr << "  determinant " << io::number(r.determinant);
      std::cerr << '\n';
    }
    try {
      pipelines::prepare_dir(cfg.output_dir);
      pipelines::write_error(cfg.output_dir, e);
    } catch (const Error&) {
      // the exit code still reports the original failure
    }
    return pipelines::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
