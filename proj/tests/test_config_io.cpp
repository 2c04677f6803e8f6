#include <catch_amalgamated.hpp>

#include <sstream>
#include <string>

#include "archimax/config.hpp"
#include "archimax/io.hpp"

using namespace archimax;
using Catch::Approx;

namespace {

Json model_a_doc() {
  return Json::parse(R"({
    "partition": [[1,2,3],[4,5,6],[7,8,9]],
    "clusters": [
      {"generator": {"family": "clayton", "theta": 1.5}, "stdf": {"kind": "logistic", "vartheta": 1.25}},
      {"generator": {"family": "joe", "theta": 1.5}, "stdf": {"kind": "logistic", "vartheta": 2.0}},
      {"generator": {"family": "joe", "theta": 2.0}, "stdf": {"kind": "logistic", "vartheta": 1.5}}
    ],
    "radial": {"kind": "gaussian", "rho": 0.5},
    "seed": 7
  })");
}

// Expected error code and JSON pointer after editing a valid document.
void expect_error(const Json& doc, const std::string& code, const std::string& pointer) {
  try {
    (void)parse_model_config(doc);
    FAIL("no error for expected code " << code);
  } catch (const ValidationError& e) {
    CHECK(e.code() == code);
    CHECK(e.pointer() == pointer);
  }
}

}  // namespace

TEST_CASE("model config parses with 1-based indices", "[config]") {
  const auto cfg = parse_model_config(model_a_doc());
  const auto& m = cfg.model;
  REQUIRE(m.K() == 3);
  CHECK(m.dim() == 9);
  CHECK(m.partition.blocks[1] == std::vector<int>{3, 4, 5});
  CHECK(m.generators[0].family() == Family::Clayton);
  CHECK(m.generators[2].theta() == 2.0);
  CHECK(m.stdfs[1].vartheta() == 2.0);
  CHECK(m.radial.kind == RadialCopulaSpec::Kind::Gaussian);
  CHECK(m.radial.corr(0, 2) == 0.5);
  CHECK(cfg.has_seed);
  CHECK(cfg.seed == 7);
}

TEST_CASE("model config round-trips through JSON", "[config]") {
  const auto cfg = parse_model_config(model_a_doc());
  const Json out = model_to_json(cfg.model, cfg.seed);
  const auto back = parse_model_config(out);
  CHECK(back.model.partition.blocks == cfg.model.partition.blocks);
  CHECK((back.model.radial.corr - cfg.model.radial.corr).cwiseAbs().maxCoeff() == 0.0);
  for (int k = 0; k < 3; ++k) {
    CHECK(back.model.generators[k].theta() == cfg.model.generators[k].theta());
    CHECK(back.model.stdfs[k].vartheta() == cfg.model.stdfs[k].vartheta());
  }
  CHECK(model_to_json(back.model, back.seed).dump() == out.dump());
}

TEST_CASE("radial and stdf variants", "[config]") {
  auto doc = model_a_doc();
  doc["radial"] = {{"kind", "gumbel"}, {"vartheta", 4.0}};
  CHECK(parse_model_config(doc).model.radial.vartheta == 4.0);
  doc["radial"] = {{"kind", "independence"}};
  CHECK(parse_model_config(doc).model.radial.kind == RadialCopulaSpec::Kind::Independence);
  doc["radial"] = Json::parse(R"({"kind": "gaussian", "corr": [[1,0.2,0.1],[0.2,1,0.3],[0.1,0.3,1]]})");
  CHECK(parse_model_config(doc).model.radial.corr(1, 2) == 0.3);
  doc["clusters"][0]["stdf"] = {{"kind", "independence"}};
  CHECK(parse_model_config(doc).model.stdfs[0].kind() == Stdf::Kind::Independence);
  doc["clusters"][0]["stdf"] = Json::parse(R"({"kind": "dnorm_mc", "w": {"kind": "logistic", "vartheta": 2}, "n_mc": 1000, "seed": 3})");
  const auto mc = parse_model_config(doc);
  CHECK(mc.model.stdfs[0].kind() == Stdf::Kind::DNormMC);
  CHECK(mc.model.stdfs[0].mc_budget() == 1000);
  CHECK_THROWS_AS(model_to_json(mc.model), CapabilityError);
}

TEST_CASE("fitting input may omit parameters", "[config]") {
  const Json doc = Json::parse(R"({"partition": [[1,2],[3,4]], "clusters": [{"generator": {"family": "joe"}}, {"generator": {"family": "frank"}}]})");
  const auto cfg = parse_model_config(doc, false);
  CHECK(cfg.families == std::vector<Family>{Family::Joe, Family::Frank});
  CHECK(cfg.model.radial.kind == RadialCopulaSpec::Kind::Independence);
  CHECK_FALSE(cfg.has_seed);
  expect_error(doc, "missing_field", "/clusters/0/generator/theta");
}

TEST_CASE("config validation errors carry codes and pointers", "[config]") {
  SECTION("singleton cluster") {
    auto doc = model_a_doc();
    doc["partition"] = Json::parse("[[1,2,3,4,5,6,7,8],[9]]");
    doc["clusters"].erase(2);
    expect_error(doc, "singleton_cluster", "/partition/1");
  }
  SECTION("overlapping blocks") {
    auto doc = model_a_doc();
    doc["partition"][1][0] = 1;
    expect_error(doc, "overlapping_blocks", "/partition/1");
  }
  SECTION("index outside 1..d") {
    auto doc = model_a_doc();
    doc["partition"][2][2] = 12;
    expect_error(doc, "index_out_of_range", "/partition/2");
    doc["partition"][2][2] = 0;
    expect_error(doc, "index_out_of_range", "/partition/2/2");
  }
  SECTION("out-of-domain generator parameter") {
    auto doc = model_a_doc();
    doc["clusters"][1]["generator"]["theta"] = 0.5;
    expect_error(doc, "parameter_domain", "/clusters/1/generator/theta");
  }
  SECTION("out-of-domain stdf parameter") {
    auto doc = model_a_doc();
    doc["clusters"][2]["stdf"]["vartheta"] = 0.9;
    expect_error(doc, "parameter_domain", "/clusters/2/stdf/vartheta");
  }
  SECTION("dimension mismatches") {
    auto doc = model_a_doc();
    doc["clusters"].erase(1);
    expect_error(doc, "dimension_mismatch", "/clusters");
    doc = model_a_doc();
    doc["clusters"][0]["stdf"]["dim"] = 2;
    expect_error(doc, "dimension_mismatch", "/clusters/0/stdf/dim");
    doc = model_a_doc();
    doc["radial"] = Json::parse(R"({"kind": "gaussian", "corr": [[1,0.2],[0.2,1]]})");
    expect_error(doc, "dimension_mismatch", "/radial/corr");
  }
  SECTION("radial correlation not positive definite") {
    auto doc = model_a_doc();
    doc["radial"]["rho"] = -0.7;
    expect_error(doc, "not_positive_definite", "/radial");
  }
  SECTION("unknown names and types") {
    auto doc = model_a_doc();
    doc["clusters"][0]["generator"]["family"] = "gumbel";
    expect_error(doc, "unknown_family", "/clusters/0/generator/family");
    doc = model_a_doc();
    doc["radial"]["kind"] = "t";
    expect_error(doc, "unknown_kind", "/radial/kind");
    doc = model_a_doc();
    doc["seed"] = -1;
    expect_error(doc, "invalid_type", "/seed");
    doc = model_a_doc();
    doc.erase("partition");
    expect_error(doc, "missing_field", "/partition");
  }
}

TEST_CASE("CSV parsing and formatting", "[io]") {
  std::istringstream in("a, b ,c\r\n1,2.5,-3e-2\n\n\"4\",5,6\n");
  const auto t = parse_csv(in);
  CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.column("b") == 1);
  CHECK(t.column("z") == -1);
  const Matrix m = numeric_columns(t, {});
  CHECK(m(0, 2) == -0.03);
  CHECK(m(1, 0) == 4.0);
  CHECK(numeric_columns(t, {2, 0})(1, 1) == 4.0);

  std::istringstream ragged("a,b\n1\n");
  CHECK_THROWS_AS(parse_csv(ragged), ValidationError);
  std::istringstream empty("");
  CHECK_THROWS_AS(parse_csv(empty), ValidationError);
  std::istringstream text("a\n1,5\n");
  CHECK_THROWS_AS(parse_csv(text), ValidationError);
  std::istringstream comma("a\n1;5\n");
  CHECK_THROWS_AS(numeric_columns(parse_csv(comma), {}), ValidationError);

  // shortest round-trip formatting
  for (double x : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5}) CHECK(parse_number(format_number(x), "test") == x);
  std::ostringstream out;
  Matrix w(2, 2);
  w << 0.25, 1.0 / 3.0, 1e-7, 2.0;
  write_matrix_csv(out, default_header(2), w);
  std::istringstream back(out.str());
  const auto t2 = parse_csv(back);
  CHECK(t2.header == std::vector<std::string>{"V1", "V2"});
  CHECK(numeric_columns(t2, {}) == w);
}
