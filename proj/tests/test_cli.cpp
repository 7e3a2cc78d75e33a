// Drives the msatr executable end to end.

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(MSATR_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf;
  while (std::size_t n = fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Workspace {
  fs::path root;
  Workspace() : root(fs::temp_directory_path() / ("msatr_cli_" + std::to_string(::getpid()))) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(root, ec);
  }
  std::string operator/(const std::string& s) const { return (root / s).string(); }
};

const char* kTinyConfig =
    "low_dir = data/low\nnormal_dir = data/normal\ncrop_size = 32\nbatch_size = 1\ntotal_steps = 4\n"
    "checkpoint_every = 2\nlr_init = 0.001\nlocal_dim = 4\nglobal_embed_dim = 8\nglobal_heads = 2\n"
    "global_out_dim = 4\nfusion_channels = 4\nnum_local_layers = 2\n";

}  // namespace

TEST_CASE("usage errors exit with 2, help with 0") {
  CHECK(run("").code == 2);
  CHECK(run("--help").code == 0);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("enhance --ckpt x").code == 2);
  CHECK(run("mix --low a --enh b --seed notanumber --out c").code == 2);
}

TEST_CASE("selfcheck exit status") {
  Run ok = run("selfcheck");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("FAIL") == std::string::npos);
  Run bad = run("selfcheck --inject-fault");
  CHECK(bad.code == 1);
  CHECK(bad.out.find("FAIL  grad:faulty_square") != std::string::npos);
}

TEST_CASE("train, enhance, eval and mix on a generated dataset") {
  Workspace ws;
  REQUIRE(run("synth --out " + ws / "data" + " --size 32 --seed 3 --low 3 --normal 3 --eval 2").code == 0);
  std::ofstream(ws / "tiny.cfg") << kTinyConfig;

  SUBCASE("config and dataset errors") {
    CHECK(run("train --config " + ws / "missing.cfg" + " --out " + ws / "o").code == 2);
    CHECK(run("train --config " + ws / "tiny.cfg" + " --out " + ws / "o" + " --set low_dir=" + ws / "nope").code == 2);
    CHECK(run("train --config " + ws / "tiny.cfg" + " --out " + ws / "o" + " --set crop_size=30").code == 2);
    CHECK(run("train --config " + ws / "tiny.cfg" + " --out " + ws / "o" + " --set no_key=1").code == 2);
  }

  SUBCASE("seeded training is reproducible and resumable") {
    REQUIRE(run("train --quiet --config " + ws / "tiny.cfg" + " --out " + ws / "a").code == 0);
    REQUIRE(run("train --quiet --config " + ws / "tiny.cfg" + " --out " + ws / "b").code == 0);
    CHECK(slurp(ws / "a/final.mstr") == slurp(ws / "b/final.mstr"));
    CHECK(fs::exists(ws / "a/step_000002.mstr"));
    CHECK(fs::exists(ws / "a/config.txt"));

    std::ifstream log(ws / "a/train_log.tsv");
    std::vector<std::string> lines;
    for (std::string l; std::getline(log, l);) lines.push_back(l);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0].rfind("step\tlr\td_loss", 0) == 0);
    CHECK(lines[4].rfind("4\t", 0) == 0);

    REQUIRE(run("train --quiet --resume " + ws / "a/step_000002.mstr" + " --out " + ws / "c").code == 0);
    CHECK(slurp(ws / "c/final.mstr") == slurp(ws / "a/final.mstr"));
    CHECK(run("train --quiet --resume " + ws / "missing.mstr" + " --out " + ws / "d").code == 3);
  }

  SUBCASE("enhance continues past bad inputs") {
    REQUIRE(run("identity --width 32 --height 32 --out " + ws / "id.mstr").code == 0);
    std::ofstream(ws / "broken.ppm") << "P6 nonsense";
    Run r = run("enhance --ckpt " + ws / "id.mstr" + " --in " + ws / "broken.ppm" + " " + ws / "data/eval/low/img_00.ppm" +
                " --out " + ws / "enh");
    CHECK(r.code == 3);
    CHECK(slurp(ws / "enh/img_00.ppm") == slurp(ws / "data/eval/low/img_00.ppm"));
    CHECK(run("enhance --ckpt " + ws / "nope.mstr" + " --in x --out " + ws / "enh").code == 3);
  }

  SUBCASE("eval writes a table and a summary") {
    REQUIRE(run("identity --width 32 --height 32 --out " + ws / "id.mstr").code == 0);
    Run r = run("eval --ckpt " + ws / "id.mstr" + " --low " + ws / "data/eval/low" + " --ref " + ws / "data/eval/ref" +
                " --out " + ws / "report.tsv");
    CHECK(r.code == 0);
    CHECK(r.out.find("pairs=2") != std::string::npos);
    const auto tsv = slurp(ws / "report.tsv");
    CHECK(std::string(tsv.begin(), tsv.end()).find("# mean") != std::string::npos);
    CHECK(run("eval --ckpt " + ws / "id.mstr" + " --low " + ws / "none" + " --ref " + ws / "data/eval/ref" + " --out " +
              ws / "r2.tsv")
              .code != 0);
  }

  SUBCASE("mix is seeded") {
    const std::string args = "mix --low " + ws / "data/eval/low/img_00.ppm" + " --enh " + ws / "data/eval/ref/img_00.ppm";
    Run a = run(args + " --seed 5 --out " + ws / "m1.ppm");
    Run b = run(args + " --seed 5 --out " + ws / "m2.ppm");
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out.find("alpha=") != std::string::npos);
    CHECK(slurp(ws / "m1.ppm") == slurp(ws / "m2.ppm"));
    CHECK(run(args + " --seed 5 --out /nonexistent/dir/m.ppm").code == 3);
  }
}
