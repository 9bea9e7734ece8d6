#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "sicwfi/commands.hpp"
#include "sicwfi/config.hpp"
#include "sicwfi/error.hpp"

using namespace sicwfi;
namespace fs = std::filesystem;

namespace {

std::string error_text(const std::function<void()>& f, ErrorCode* code = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (code) *code = e.code();
    return e.what();
  }
  return {};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sicwfi_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json run(const std::string& text, const fs::path& dir) {
  const RunConfig c = parse_config(text);
  RunContext ctx;
  ctx.output_dir = dir;
  run_command(c, ctx);
  return nlohmann::json::parse(slurp(dir / "result.json"));
}

int tool(const std::string& args) {
  const std::string cmd = std::string(SICWFI_TOOL) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, MinimalFileUsesDefaults) {
  const RunConfig c = parse_config("command = eta-wfi\n");
  EXPECT_EQ(c.command, "eta-wfi");
  EXPECT_DOUBLE_EQ(c.number("efficiency.coupler"), 0.9);
  EXPECT_EQ(c.at("efficiency.coupler").provenance, Provenance::default_value);
  EXPECT_EQ(c.integer("run.seed"), 1);
}

TEST(Config, UnitsListsAndRanges) {
  const RunConfig c = parse_config(
      "# sweep\n"
      "command = taper-sweep\n"
      "[taper]\n"
      "overlap = 12 um   # trailing comment\n"
      "tip_radius = 0.25um\n"
      "waveguide_angle = 0.0349066 rad\n"
      "[sweep]\n"
      "values = 5um:20um:5um\n");
  EXPECT_NEAR(c.number("taper.overlap"), 12e-6, 1e-18);
  EXPECT_NEAR(c.number("taper.tip_radius"), 250e-9, 1e-18);
  EXPECT_NEAR(c.number("taper.waveguide_angle"), 2.0, 1e-4);
  const auto& v = c.list("sweep.values");
  ASSERT_EQ(v.size(), 4u);
  EXPECT_NEAR(v.back(), 20e-6, 1e-18);
  EXPECT_EQ(c.at("taper.overlap").line, 4);
  EXPECT_EQ(c.at("taper.overlap").provenance, Provenance::user);

  const RunConfig l = parse_config("[geometry]\nwidths = [400nm, 0.5um]\n", "mode-sweep");
  ASSERT_EQ(l.list("geometry.widths").size(), 2u);
  EXPECT_NEAR(l.list("geometry.widths")[1], 500e-9, 1e-18);

  Dimension d;
  EXPECT_DOUBLE_EQ(unit_scale("MHz/mT", d), 1e9);
  EXPECT_EQ(d, Dimension::gyromagnetic);
}

TEST(Config, ErrorsCarryLineNumbers) {
  ErrorCode code{};
  std::string msg = error_text(
      [] { parse_config("command = eta-wfi\n[efficiency]\ncoupler = 1.5\n"); }, &code);
  EXPECT_EQ(code, ErrorCode::parse_error);
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;

  msg = error_text([] {
    parse_config("command = eta-wfi\n[efficiency]\ncoupler = 0.5\n\ncoupler = 0.6\n");
  });
  EXPECT_NE(msg.find("line 5"), std::string::npos) << msg;
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;

  msg = error_text([] { parse_config("command = eta-wfi\n[efficiency]\ncoupling = 0.5\n"); });
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("unknown key"), std::string::npos) << msg;

  msg = error_text([] { parse_config("command = taper-sweep\n[taper]\noverlap = 12\n"); });
  EXPECT_NE(msg.find("missing unit"), std::string::npos) << msg;

  msg = error_text([] { parse_config("command = taper-sweep\n[taper]\noverlap = 12 MHz\n"); });
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;

  error_text([] { parse_config("command = no-such-thing\n"); }, &code);
  EXPECT_EQ(code, ErrorCode::unknown_command);
  error_text([] { parse_config("command = eta-wfi\n", "g2"); }, &code);
  EXPECT_EQ(code, ErrorCode::parse_error);
}

TEST(Config, OverridesWinAndRoundTrip) {
  RunConfig c = parse_config("command = eta-wfi\n[efficiency]\ncoupler = 0.8\n");
  apply_override(c, "efficiency.coupler=0.85");
  EXPECT_DOUBLE_EQ(c.number("efficiency.coupler"), 0.85);
  EXPECT_EQ(c.at("efficiency.coupler").provenance, Provenance::flag);
  EXPECT_THROW(apply_override(c, "efficiency.nothing=1"), Error);
  EXPECT_THROW(apply_override(c, "no-equals-sign"), Error);
  const RunConfig again = parse_config(c.to_text());
  for (const auto& [name, value] : c.values) {
    EXPECT_EQ(again.at(name).numbers, value.numbers) << name;
  }
}

TEST(Config, EverySchemaDefaultParses) {
  for (const auto& name : command_names()) {
    EXPECT_NO_THROW(parse_config("", name)) << name;
    EXPECT_FALSE(command_schema(name).empty());
  }
}

TEST(Commands, EtaWfiWritesResultAndManifest) {
  const fs::path dir = scratch("eta");
  const auto j = run("command = eta-wfi\n", dir);
  EXPECT_NEAR(j["eta_wfi"].get<double>(), 0.937019, 1e-6);
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["command"], "eta-wfi");
  EXPECT_TRUE(fs::exists(dir / "config.resolved"));
  const std::string digest = sha256_file(dir / "result.json");
  EXPECT_EQ(digest.size(), 64u);
  bool listed = false;
  for (const auto& o : m["outputs"]) listed = listed || o.dump().find(digest) != std::string::npos;
  EXPECT_TRUE(listed);
  fs::remove_all(dir);
}

TEST(Commands, Sha256KnownVector) {
  const fs::path dir = scratch("sha");
  std::ofstream(dir / "abc") << "abc";
  EXPECT_EQ(sha256_file(dir / "abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  fs::remove_all(dir);
}

TEST(Commands, SimulateEmitterIsReproducible) {
  const std::string cfg =
      "command = simulate-emitter\n[emitter]\nduration = 20 ms\n[background]\ng2_target = 0.27\n"
      "[output]\nformat = both\n[run]\nseed = 17\n";
  const fs::path a = scratch("emit_a"), b = scratch("emit_b");
  run(cfg, a);
  run(cfg, b);
  EXPECT_EQ(slurp(a / "tags.bin"), slurp(b / "tags.bin"));
  EXPECT_EQ(slurp(a / "tags.csv"), slurp(b / "tags.csv"));
  EXPECT_FALSE(slurp(a / "tags.bin").empty());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Commands, TaperSweepPlumbing) {
  const fs::path dir = scratch("taper");
  const auto j = run(
      "command = taper-sweep\n[taper]\nwaveguide_angle = 4deg\nfiber_angle = 4deg\n"
      "[eme]\nspacing = 40nm\nmargin = 700nm\n[sweep]\nvalues = [4um, 6um]\n[run]\nworkers = 2\n",
      dir);
  EXPECT_TRUE(j.is_object());
  const std::string csv = slurp(dir / "transmission.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  fs::remove_all(dir);
}

TEST(Tool, ExitCodesFollowErrorCodes) {
  EXPECT_EQ(tool("--list"), 0);
  EXPECT_EQ(tool("no-such-command"), static_cast<int>(ErrorCode::unknown_command));
  EXPECT_EQ(tool("eta-wfi --set efficiency.coupler=2"), static_cast<int>(ErrorCode::parse_error));
  EXPECT_EQ(tool("eta-wfi --config /nonexistent/run.cfg"), static_cast<int>(ErrorCode::io_error));
  const fs::path dir = scratch("tool");
  EXPECT_EQ(tool("eta-wfi --set efficiency.transmission=0.95 --output " + dir.string()),
            static_cast<int>(ErrorCode::unphysical_input));
  EXPECT_EQ(tool("eta-wfi --output " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  fs::remove_all(dir);
}
