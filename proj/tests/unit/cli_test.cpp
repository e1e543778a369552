// End-to-end tests of the flashcg executable.
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "flashcg/analysis.hpp"
#include "flashcg/model.hpp"
#include "flashcg/params_io.hpp"
#include "flashcg/synthetic.hpp"
#include "flashcg/system_io.hpp"

namespace fs = std::filesystem;
using namespace flashcg;

namespace {

struct CliRun {
  int code = -1;
  std::string output;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / "flashcg_cli" / info->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  CliRun run(const std::string& args) const {
    const std::string log = path("stdout.txt");
    const std::string cmd = std::string("\"") + FLASHCG_CLI_PATH + "\" " + args + " > \"" + log + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
  }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream out(path(name));
    out << text;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // Small model + generated system, referenced from cfg.txt.
  void small_setup(int beads, const std::string& extra = "") {
    ModelConfig mc;
    mc.hidden_dim = 16;
    mc.rbf_dim = 8;
    mc.num_blocks = 2;
    mc.cutoff = 1.0;
    mc.num_atom_types = 20;
    mc.filter_hidden_dim = 16;
    mc.readout_hidden_dim = 8;
    save_params(path("params.flcg"), init_params(mc, 1));
    GeneratorOptions go;
    go.beads = beads;
    go.seed = 2;
    write_system(path("system.txt"), generate_system(go));
    write("cfg.txt", "[run]\nout = " + path("out") +
                         "\n[model]\nhidden_dim = 16\nrbf_dim = 8\nnum_blocks = 2\ncutoff = 1.0\n"
                         "filter_hidden_dim = 16\nreadout_hidden_dim = 8\n"
                         "[files]\nsystem = " + path("system.txt") + "\nparams = " + path("params.flcg") +
                         "\n" + extra);
  }

  fs::path dir_;
};

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string l;
  while (std::getline(ss, l)) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string f;
  while (std::getline(ss, f, sep)) out.push_back(f);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_NE(run("no-such-command").code, 0);
  EXPECT_NE(run("--mode 16bit verify").code, 0);
}

TEST_F(Cli, SimulateTwoBeadsWritesOutputs) {
  small_setup(2, "[sim]\nn_steps = 10\noutput_stride = 5\n");
  const auto r = run("--config " + path("cfg.txt") + " simulate");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(path("out/trajectory.xyz")));
  const auto log = lines_of(slurp(path("out/scalars.csv")));
  ASSERT_EQ(log.size(), 2u + 3u);
  EXPECT_EQ(log[1], "step,replica,potential,prior,kinetic_T,wall_ms");
  EXPECT_EQ(read_trajectory(path("out/trajectory.xyz")).size(), 3u);
  EXPECT_NE(r.output.find("ns/day"), std::string::npos);
}

TEST_F(Cli, MissingParamsNamesThePath) {
  small_setup(4, "[sim]\nn_steps = 2\n");
  fs::remove(path("params.flcg"));
  const auto r = run("--config " + path("cfg.txt") + " simulate");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("params.flcg"), std::string::npos) << r.output;
}

TEST_F(Cli, QuantWithoutQuantizedParamsIsAnError) {
  small_setup(4, "[sim]\nn_steps = 2\n");
  const auto r = run("--config " + path("cfg.txt") + " --quant on simulate");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("quantize"), std::string::npos) << r.output;
}

TEST_F(Cli, InjectedFaultFailsVerify) {
  write("cfg.txt", "[verify]\nsystems = 6\n");
  const auto r = run("--config " + path("cfg.txt") + " --inject-fault verify --checks equivalence");
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("energy-equivalence"), std::string::npos);
  EXPECT_NE(r.output.find("FAIL"), std::string::npos);
  EXPECT_NE(r.output.find("instance seed"), std::string::npos);
  const auto ok = run("--config " + path("cfg.txt") + " verify --checks equivalence,metrics");
  EXPECT_EQ(ok.code, 0) << ok.output;
  EXPECT_NE(run("verify --checks bogus").code, 0);
}

TEST_F(Cli, AnalyzeNativeTrajectory) {
  GeneratorOptions go;
  go.beads = 30;
  go.seed = 5;
  go.shape = SystemShape::globule;
  const auto sys = generate_system(go);
  write_system(path("system.txt"), sys);
  {
    std::ofstream out(path("traj.xyz"));
    for (int f = 0; f < 12; ++f) write_xyz_frame(out, TrajectoryFrame{f * 10, 0, sys.types, sys.positions});
  }
  const auto r = run("--out " + path("out") + " analyze --trajectory " + path("traj.xyz") + " --system " +
                     path("system.txt"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto rows = lines_of(slurp(path("out/metrics.csv")));
  ASSERT_EQ(rows.size(), 2u + 12u);
  EXPECT_EQ(rows[0], "# flashcg metrics v1");
  EXPECT_EQ(rows[1], "frame,step,replica,rmsd,q,gdt_ts,edges");
  const double q_native = fraction_native_contacts(sys.positions, build_contacts(sys.positions));
  for (std::size_t i = 2; i < rows.size(); ++i) {
    const auto cols = split(rows[i], ',');
    ASSERT_EQ(cols.size(), 7u) << rows[i];
    EXPECT_LT(std::stod(cols[3]), 1e-6);
    EXPECT_NEAR(std::stod(cols[4]), q_native, 1e-7);
    EXPECT_NEAR(std::stod(cols[5]), 1.0, 1e-9);
  }
}

TEST_F(Cli, AnalyzeRejectsEmptyTrajectory) {
  GeneratorOptions go;
  go.beads = 8;
  write_system(path("system.txt"), generate_system(go));
  write("empty.xyz", "");
  const auto r = run("analyze --trajectory " + path("empty.xyz") + " --system " + path("system.txt"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("no frames"), std::string::npos) << r.output;
}

TEST_F(Cli, QuantizePrintsOneRowPerLayer) {
  small_setup(4);
  const auto r = run("--config " + path("cfg.txt") + " quantize " + path("params.flcg") + " " + path("q.flcg") +
                     " --states 3");
  ASSERT_EQ(r.code, 0) << r.output;
  int rows = 0;
  for (const auto& l : lines_of(r.output))
    if (l.rfind("block", 0) == 0 || l.rfind("readout", 0) == 0) ++rows;
  EXPECT_EQ(rows, 2 * 5 + 2);
  EXPECT_TRUE(load_params(path("q.flcg")).quantized());
  // the quantized file now runs in quant mode
  write("cfg2.txt", slurp(path("cfg.txt")) + "[sim]\nn_steps = 3\n");
  std::string cfg2 = slurp(path("cfg2.txt"));
  cfg2.replace(cfg2.find("params.flcg"), 11, "q.flcg");
  write("cfg2.txt", cfg2);
  EXPECT_EQ(run("--config " + path("cfg2.txt") + " --quant on simulate").code, 0);
}

TEST_F(Cli, BenchSingleCellHasAllColumns) {
  write("cfg.txt", "[model]\nhidden_dim = 16\nrbf_dim = 8\nfilter_hidden_dim = 16\nreadout_hidden_dim = 8\n"
                   "[bench]\nbeads = 64\nedges_per_node = 8\nsteps = 1\nwarmup = 0\n");
  const auto r = run("--config " + path("cfg.txt") + " --out " + path("out") + " --fused on --segred on bench");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto rows = lines_of(slurp(path("out/bench.csv")));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "# flashcg bench v1");
  const auto header = split(rows[1], ',');
  const auto cells = split(rows[2], ',');
  EXPECT_EQ(header.size(), 16u);
  ASSERT_EQ(cells.size(), header.size());
  for (const auto& c : cells) EXPECT_FALSE(c.empty());
}

TEST_F(Cli, SimulationIsDeterministicExceptTiming) {
  small_setup(12, "[sim]\nn_steps = 20\noutput_stride = 4\nreplicas = 2\n");
  ASSERT_EQ(run("--config " + path("cfg.txt") + " --seed 9 --out " + path("a") + " simulate").code, 0);
  ASSERT_EQ(run("--config " + path("cfg.txt") + " --seed 9 --workers 2 --out " + path("b") + " simulate").code, 0);
  EXPECT_EQ(slurp(path("a/trajectory.xyz")), slurp(path("b/trajectory.xyz")));
  auto strip_wall = [&](const std::string& file) {
    std::string out;
    for (const auto& l : lines_of(slurp(file))) {
      const auto comma = l.rfind(',');
      out += (l.rfind("step", 0) == 0 || l[0] == '#' ? l : l.substr(0, comma)) + "\n";
    }
    return out;
  };
  EXPECT_EQ(strip_wall(path("a/scalars.csv")), strip_wall(path("b/scalars.csv")));
  ASSERT_EQ(run("--config " + path("cfg.txt") + " --seed 10 --out " + path("c") + " simulate").code, 0);
  EXPECT_NE(slurp(path("a/trajectory.xyz")), slurp(path("c/trajectory.xyz")));
}

TEST_F(Cli, BlowUpExitsWithDedicatedCode) {
  GeneratorOptions go;
  go.beads = 6;
  auto sys = generate_system(go);
  sys.positions[2][0] += 3.0;
  write_system(path("system.txt"), sys);
  write("cfg.txt", "[run]\nout = " + path("out") + "\n[sim]\nn_steps = 5\nmodel_forces = false\nblowup_force = 10\n"
                   "[files]\nsystem = " + path("system.txt") + "\n");
  const auto r = run("--config " + path("cfg.txt") + " simulate");
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("blew up"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("out/blowup.xyz")));
}

TEST_F(Cli, CheckpointResume) {
  small_setup(10, "[sim]\nn_steps = 12\noutput_stride = 12\ncheckpoint_step = 6\n");
  ASSERT_EQ(run("--config " + path("cfg.txt") + " --mode 64bit simulate").code, 0);
  ASSERT_TRUE(fs::exists(path("out/checkpoint.bin")));
  const auto full = read_trajectory(path("out/trajectory.xyz"));
  std::string text = slurp(path("cfg.txt"));
  text.insert(text.find("[files]\n") + 8, "resume = " + path("out/checkpoint.bin") + "\n");
  write("resume.txt", text);
  ASSERT_EQ(run("--config " + path("resume.txt") + " --mode 64bit --out " + path("r") + " simulate").code, 0);
  const auto resumed = read_trajectory(path("r/trajectory.xyz"));
  ASSERT_FALSE(resumed.empty());
  EXPECT_EQ(resumed.back().step, 12);
  EXPECT_EQ(resumed.back().positions, full.back().positions);
  // precision mismatch is refused
  EXPECT_EQ(run("--config " + path("resume.txt") + " --mode 32bit --out " + path("s") + " simulate").code, 1);
}

TEST_F(Cli, GenSystemAndInitParams) {
  const auto a = run("--out " + path("o") + " gen-system --shape helix --beads 25 --energy-unit kcal/mol");
  ASSERT_EQ(a.code, 0) << a.output;
  const auto sys = read_system(path("o/system.txt"));
  EXPECT_EQ(sys.size(), 25);
  EXPECT_EQ(sys.energy_unit, "kcal/mol");
  ASSERT_EQ(run("--seed 3 init-params -o " + path("p.flcg")).code, 0);
  ASSERT_EQ(run("--seed 3 init-params -o " + path("p2.flcg")).code, 0);
  EXPECT_EQ(slurp(path("p.flcg")), slurp(path("p2.flcg")));
}
