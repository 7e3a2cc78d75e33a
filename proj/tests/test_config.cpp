#include <fstream>

#include "doctest.h"
#include "msatr/config.hpp"
#include "msatr/errors.hpp"
#include "support.hpp"

using namespace msatr;

TEST_CASE("key-value parsing") {
  auto kv = parse_key_values("# header\n\n a = 1 \nb=two words  # trailing\n", "t.cfg");
  REQUIRE(kv.size() == 2);
  CHECK(kv[0].key == "a");
  CHECK(kv[0].value == "1");
  CHECK(kv[0].line == 3);
  CHECK(kv[1].value == "two words");
  CHECK_THROWS_AS(parse_key_values("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values("just text\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values(" = 3\n"), ConfigError);
  try {
    parse_key_values("a = 1\noops\n", "run.cfg");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("run.cfg:2") != std::string::npos);
  }
}

TEST_CASE("run config values and resolution follow crop size") {
  RunConfig rc = RunConfig::parse(
      "crop_size = 32\nbatch_size = 2\nw_luminance = 0\nvariant = local-only\nlocal_dim = 8\n"
      "adversarial_form = printed\nidentity_norm = l2\nlow_dir = data/low\n",
      "x.cfg", "/base");
  CHECK(rc.generator.height == 32);
  CHECK(rc.generator.width == 32);
  CHECK(rc.generator.variant == GeneratorVariant::LocalOnly);
  CHECK(rc.generator.local_dim == 8);
  CHECK(rc.train.batch_size == 2);
  CHECK(rc.train.weights.luminance == 0.0);
  CHECK(rc.train.options.adversarial == AdversarialForm::Printed);
  CHECK(rc.train.options.identity_norm == IdentityNorm::L2);
  CHECK(rc.train.low_dir == std::filesystem::path("/base/data/low"));
}

TEST_CASE("bad configs are rejected") {
  CHECK_THROWS_AS(RunConfig::parse("no_such_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("height = 64\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("batch_size = -1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("batch_size = 2x\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("lr_init = nan\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("crop_size = 36\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("w_sfp = -0.5\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("variant = both\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("local_dim = 6\nlocal_heads = 4\n"), ConfigError);
}

TEST_CASE("overrides and text roundtrip") {
  RunConfig rc = RunConfig::parse("seed = 3\n");
  rc.set("lr_init=0.000123456789012345");
  rc.set(" total_steps = 9 ");
  CHECK(rc.train.total_steps == 9);
  CHECK_THROWS_AS(rc.set("nonsense"), ConfigError);
  CHECK_THROWS_AS(rc.set("bogus=1"), ConfigError);
  RunConfig back = RunConfig::parse(rc.to_text());
  CHECK(back.train == rc.train);
  CHECK(back.generator == rc.generator);
  CHECK(generator_from_text(generator_to_text(rc.generator)) == rc.generator);
  CHECK(train_from_text(train_to_text(rc.train)) == rc.train);
}

TEST_CASE("every documented key is accepted") {
  RunConfig def;
  def.train.low_dir = "/d/low";
  def.train.normal_dir = "/d/normal";
  def.finalize();
  const std::string text = def.to_text();
  for (const auto& key : run_config_keys()) CHECK(text.find(key + " = ") != std::string::npos);
}

TEST_CASE("loading from disk resolves dataset paths next to the file") {
  testsupport::TempDir dir("cfg");
  std::filesystem::create_directories(dir / "sub");
  std::ofstream(dir / "sub" / "run.cfg") << "low_dir = ../low\nnormal_dir = " << (dir / "abs").string() << "\n";
  RunConfig rc = RunConfig::load(dir / "sub" / "run.cfg");
  CHECK(std::filesystem::weakly_canonical(rc.train.low_dir) == std::filesystem::weakly_canonical(dir / "low"));
  CHECK(rc.train.normal_dir == dir / "abs");
  CHECK_THROWS_AS(RunConfig::load(dir / "missing.cfg"), Error);
}
