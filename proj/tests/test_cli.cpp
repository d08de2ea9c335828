#include <sstream>

#include "doctest.h"
#include "resad/cli.hpp"
#include "resad/feature_store.hpp"
#include "resad/scoring.hpp"
#include "support.hpp"

using namespace resad;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "resad");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  const auto b = read_file_bytes(path);
  return {b.begin(), b.end()};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 1") {
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"train", "--out", "x.ckpt"}).code == 1);
  CHECK(run({"synth"}).code == 1);
  const Run h = run({"--help"});
  CHECK(h.code == 0);
  CHECK(h.out.find("train") != std::string::npos);
}

TEST_CASE("missing files exit with 2") {
  testing_support::ScratchDir dir("cli_io");
  const Run r = run({"train", "--data", dir / "absent.rsfd", "--out", dir / "m.ckpt"});
  CHECK(r.code == 2);
  CHECK(r.err.find("io error") != std::string::npos);
}

TEST_CASE("synth, train, eval and stats round trip") {
  testing_support::ScratchDir dir("cli_e2e");
  REQUIRE(run({"synth", "--out", dir / "train.rsfd", "--images-per-class", "20"}).code == 0);
  REQUIRE(run({"synth", "--out", dir / "test.rsfd", "--images-per-class", "20", "--classes", "1", "--first-class",
               "2", "--split", "1"})
              .code == 0);
  CHECK(run({"synth", "--out", dir / "bad.rsfd", "--layers", "8x8"}).code == 1);

  const Run t = run({"train", "--data", dir / "train.rsfd", "--out", dir / "m.ckpt", "--set", "epochs=2", "--set",
                     "coupling_blocks=2", "--set", "codebook_size=8", "--set", "batch_size=16"});
  REQUIRE(t.code == 0);
  CHECK(t.out.find("epoch 2") != std::string::npos);
  CHECK(slurp(dir / "m.ckpt.manifest").find("references.class_0") != std::string::npos);
  CHECK(run({"train", "--data", dir / "train.rsfd", "--out", dir / "n.ckpt", "--set", "bogus=1"}).code == 1);

  const Run e1 = run({"eval", "--ckpt", dir / "m.ckpt", "--data", dir / "test.rsfd", "--maps", dir / "maps.rssm"});
  const Run e2 = run({"eval", "--ckpt", dir / "m.ckpt", "--data", dir / "test.rsfd"});
  REQUIRE(e1.code == 0);
  CHECK(e1.out == e2.out);
  CHECK(e1.out.find("image_auroc = ") == 0);
  CHECK(read_score_maps(dir / "maps.rssm").size() == 16);  // 20 images minus 4 references

  CHECK(run({"eval", "--ckpt", dir / "m.ckpt", "--data", dir / "test.rsfd", "--report", dir / "r.txt"}).code == 0);
  CHECK(slurp(dir / "r.txt") == e1.out);

  CHECK(run({"eval", "--ckpt", dir / "m.ckpt", "--data", dir / "test.rsfd", "--refs", "0,1", "--n-refs", "2"}).code ==
        1);
  CHECK(run({"eval", "--ckpt", dir / "m.ckpt", "--data", dir / "test.rsfd", "--refs", "9999"}).code == 1);
  CHECK(run({"eval", "--ckpt", dir / "absent.ckpt", "--data", dir / "test.rsfd"}).code == 2);
  CHECK(run({"eval", "--ckpt", dir / "train.rsfd", "--data", dir / "test.rsfd"}).code == 1);

  const Run s = run({"stats", "--data", dir / "train.rsfd", "--ckpt", dir / "m.ckpt"});
  CHECK(s.code == 0);
  CHECK(s.out.find("constrained.kurtosis") != std::string::npos);
}

TEST_CASE("verify passes") {
  const Run v = run({"verify"});
  CHECK(v.code == 0);
  CHECK(v.out.find("FAIL") == std::string::npos);
}

}  // TEST_SUITE
