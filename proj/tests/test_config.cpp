#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>
#include <string>

#include "fdmnet/config.hpp"

using namespace fdmnet;

TEST_CASE("config text round-trips every key") {
  RunConfig a;
  set_config_value(a, "seed", "17");
  set_config_value(a, "loss.lambda1", "0.125");
  set_config_value(a, "ppnorm.stages", "2,3");
  set_config_value(a, "train.milestones", "0.4,0.7");
  a.finalize();

  RunConfig b;
  apply_config_text(b, config_text(a), "roundtrip");
  b.finalize();
  CHECK(config_text(b) == config_text(a));
  CHECK(b.seed == 17);
  CHECK(b.loss.lambda1 == 0.125);
  CHECK(b.model.ppnorm.stages == std::vector<std::size_t>{2, 3});
}

TEST_CASE("unknown keys and bad values name their source line") {
  RunConfig c;
  try {
    apply_config_text(c, "# comment\nseed=3\nmodel.nope=1\n", "my.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("my.cfg:3") != std::string::npos);
    CHECK(msg.find("model.nope") != std::string::npos);
  }
  CHECK_THROWS_AS(set_config_value(c, "train.epochs", "ten"), ConfigError);
  CHECK_THROWS_AS(set_config_value(c, "loss.rho", ""), ConfigError);
  CHECK_THROWS_AS(apply_config_file(c, "/nonexistent/x.cfg"), ConfigError);
}

TEST_CASE("finalize copies derived fields") {
  RunConfig c;
  set_config_value(c, "data.train_identities", "12");
  set_config_value(c, "seed", "9");
  c.finalize();
  CHECK(c.model.num_identities == 12);
  CHECK(c.eval.seed == 9);
}

TEST_CASE("help lists every key once with an origin") {
  auto help = config_help();
  std::set<std::string> seen;
  for (const auto& k : config_keys()) {
    CHECK(seen.insert(k.key).second);
    auto pos = help.find("  " + k.key + " ");
    REQUIRE_MESSAGE(pos != std::string::npos, k.key);
    auto eol = help.find('\n', pos);
    auto line = help.substr(pos, eol - pos);
    CHECK((line.find("[reference]") != std::string::npos || line.find("[local]") != std::string::npos));
  }
}
