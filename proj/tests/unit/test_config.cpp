#include "doctest.h"
#include "helpers.hpp"
#include "splitct/config.hpp"

using namespace splitct;

TEST_CASE("config parsing") {
  const Config c = Config::parse("# comment\n\ngeometry.size = 32\n  train.lr=0.001  \nnoise.kind = gaussian\n");
  CHECK(c.get_int("geometry.size", 0) == 32);
  CHECK(c.get_double("train.lr", 0) == 0.001);
  CHECK(c.get_string("noise.kind", "") == "gaussian");
  CHECK(c.get_int("geometry.n_angles", 16) == 16);
  CHECK_FALSE(c.has("geometry.n_angles"));
}

TEST_CASE("config errors name the problem") {
  CHECK_THROWS_AS(Config::parse("geometry.size 32"), ConfigError);
  CHECK_THROWS_AS(Config::parse("geometry.colour = red"), ConfigError);
  CHECK_THROWS_AS(Config::parse("geometry.size = 32\ngeometry.size = 64"), ConfigError);
  CHECK_THROWS_AS(Config::parse("geometry.size ="), ConfigError);
  CHECK_THROWS_WITH_AS(Config::parse("a = 1", "run.cfg"), "run.cfg:1: unknown key 'a'", ConfigError);
  const Config c = Config::parse("geometry.size = 3x\ntrain.shuffle = maybe");
  CHECK_THROWS_AS(c.get_int("geometry.size", 0), ConfigError);
  CHECK_THROWS_AS(c.get_bool("train.shuffle", false), ConfigError);
  CHECK_THROWS_AS(Config::load("/nonexistent/run.cfg"), IoError);
  CHECK_THROWS_AS(Settings::from_config(Config::parse("geometry.size = 31")), ContractError);
  CHECK_THROWS_AS(Settings::from_config(Config::parse("verify.map = median")), ContractError);
  CHECK_THROWS_AS(Settings::from_config(Config::parse("noise.kind = speckle")), ConfigError);
}

TEST_CASE("settings defaults and dump round trip") {
  const Settings d;
  CHECK(d.size == 64);
  CHECK(d.n_angles == 16);
  CHECK(d.i0 == 1e5);
  CHECK(d.sigma_e == 1e-3);
  CHECK(d.lr == 1e-4);
  CHECK(d.max_epochs == 15000);
  CHECK(d.solver_relative_step == kDefaultRelativeStep);

  Settings s = Settings::from_config(Config::parse(
      "geometry.size = 32\nsolver.step = 0.002\ntrain.shuffle = true\nseed.master = 12345678901234\n"
      "noise.sigma_g = 0.0125\n"));
  const std::string dump = s.dump();
  const Settings back = Settings::from_config(Config::parse(dump));
  CHECK(back.dump() == dump);
  CHECK(back.solver_step == 0.002);
  CHECK(back.shuffle);
  CHECK(back.master_seed == 12345678901234ULL);
  CHECK(dump.find("solver.step = 0.002\n") != std::string::npos);
  CHECK(Settings{}.dump().find("solver.step = auto\n") != std::string::npos);
  CHECK(s.to_config().values().size() == 28);
}

TEST_CASE("settings derive components") {
  Settings s = Settings::from_config(Config::parse("geometry.size = 32\ngeometry.n_angles = 8\nnet.channels = 4"));
  CHECK(s.geometry().n_dets == 47);
  CHECK(s.geometry().n_angles() == 8);
  CHECK(s.net().channels == 4);
  CHECK(s.phantom().size == 32);
  CHECK(s.stream_seed("noise") != s.stream_seed("dataset"));
  CHECK(s.noise().seed == s.stream_seed("noise"));
  const MethodConfig mc = s.method_config(Method::double_split);
  CHECK(mc.scheme.is_double());
  CHECK(mc.net.channels == 4);
  CHECK(mc.seed == s.stream_seed("train"));
  Settings t = s;
  t.master_seed = 1;
  CHECK(t.stream_seed("noise") != s.stream_seed("noise"));
}
