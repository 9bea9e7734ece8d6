// Command-line entry point: one command per invocation.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "sicwfi/commands.hpp"
#include "sicwfi/config.hpp"
#include "sicwfi/error.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) sicwfi::fail(sicwfi::ErrorCode::io_error, "cannot read config " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void describe(const std::string& command) {
  std::cout << "command = " << command << "\n";
  std::string section;
  for (const auto& spec : sicwfi::command_schema(command)) {
    if (spec.section != section) {
      section = spec.section;
      std::cout << "\n[" << section << "]\n";
    }
    std::cout << spec.key << " = " << (spec.default_text.empty() ? "\"\"" : spec.default_text);
    if (!spec.help.empty()) std::cout << "  # " << spec.help;
    if (!spec.choices.empty()) {
      std::cout << " {";
      for (std::size_t k = 0; k < spec.choices.size(); ++k) std::cout << (k ? ", " : "") << spec.choices[k];
      std::cout << "}";
    }
    std::cout << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Waveguide-fiber interface, spin and photon-statistics toolkit"};
  std::string command, config_path, output;
  long long workers = -1;
  unsigned long long seed = 0;
  bool verbose = false, list = false, show = false;
  std::vector<std::string> overrides;
  app.add_option("command", command, "command to run (or `command =` in the config)");
  app.add_option("--config", config_path, "config file");
  app.add_option("--output", output, "output directory");
  app.add_option("--workers", workers, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  app.add_option("--set", overrides, "override as section.key=value (repeatable)");
  app.add_flag("--verbose", verbose, "progress output on stderr");
  app.add_flag("--list", list, "list commands");
  app.add_flag("--describe", show, "print the command's keys and defaults");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (list) {
      for (const auto& name : sicwfi::command_names()) std::cout << name << "\n";
      return 0;
    }
    if (show) {
      if (command.empty()) sicwfi::fail(sicwfi::ErrorCode::unknown_command, "--describe needs a command");
      describe(command);
      return 0;
    }
    const std::string text = config_path.empty() ? std::string() : read_file(config_path);
    sicwfi::RunConfig config = sicwfi::parse_config(text, command);
    for (const auto& o : overrides) sicwfi::apply_override(config, o);
    if (*seed_opt) sicwfi::apply_override(config, "run.seed=" + std::to_string(seed));
    if (workers >= 0) sicwfi::apply_override(config, "run.workers=" + std::to_string(workers));

    sicwfi::RunContext context;
    context.output_dir = sicwfi::resolve_output_dir(output, config);
    context.verbose = verbose;
    context.log = &std::cerr;
    const auto report = sicwfi::run_command(config, context);
    std::cout << config.command << ": wrote " << report.outputs.size() + 1 << " files to "
              << context.output_dir.string() << "\n";
    return 0;
  } catch (const sicwfi::Error& e) {
    std::cerr << "error[" << e.code_name() << "]: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
}
