#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "slmfit/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Bayesian spatial econometric models fitted with nested Laplace approximations"};
  app.require_subcommand(1);

  std::string config;
  std::optional<int> threads;
  std::optional<std::string> output;
  const std::pair<const char*, const char*> verbs[] = {
      {"fit", "fit every model kind listed in the config"},
      {"impacts", "fit and report direct, indirect and total impacts"},
      {"scan", "fit kNN weights over a range of k and average the results"},
      {"validate", "check inputs without fitting"},
  };
  for (const auto& [name, help] : verbs) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config, "YAML run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("-t,--threads", threads, "worker threads (default: OpenMP setting)")->check(CLI::PositiveNumber);
    sub->add_option("-o,--output", output, "output directory (overrides the config)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : slmfit::cli::kInputError;
  }
  const std::string verb = app.get_subcommands().front()->get_name();
  return slmfit::cli::execute(verb, config, threads, output, std::cout, std::cerr);
}
