#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedsim/error.hpp"
#include "fedsim/io.hpp"
#include "support.hpp"

using namespace fedsim;
using namespace fedsim::testing;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "fedsim_test_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

}  // namespace

TEST_CASE("personal model file round trip is bit-exact") {
  Rng rng(3);
  PersonalModelFile f{0xDEADBEEFCAFEULL, -4, 17, random_params(33, rng)};
  f.params[0] = -0.0;
  f.params[1] = 1e-310;  // subnormal
  const auto path = temp_file("model.bin");
  write_personal_model(path, f);
  CHECK(std::filesystem::file_size(path) == 4 + 4 + 8 + 8 + 8 + 8 + 33 * 8);
  const PersonalModelFile back = read_personal_model(path);
  CHECK(back.spec_hash == f.spec_hash);
  CHECK(back.client_id == -4);
  CHECK(back.round == 17);
  CHECK(back.params == f.params);
  CHECK(std::signbit(back.params[0]));
}

TEST_CASE("personal model file errors") {
  PersonalModelFile f{1, 2, 3, ParamVector{1.0, 2.0}};
  const auto good = temp_file("good.bin"), bad = temp_file("bad.bin");
  write_personal_model(good, f);
  const std::string bytes = slurp(good);

  dump(bad, "XXXX" + bytes.substr(4));
  CHECK_THROWS_AS(read_personal_model(bad), ParseError);
  std::string v = bytes;
  v[4] = 9;
  dump(bad, v);
  CHECK_THROWS_AS(read_personal_model(bad), ParseError);
  dump(bad, bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_personal_model(bad), ParseError);
  dump(bad, bytes + "z");
  CHECK_THROWS_AS(read_personal_model(bad), ParseError);
  CHECK_THROWS_AS(read_personal_model(temp_file("absent.bin")), ParseError);
}

TEST_CASE("prediction CSV round trip and schema checks") {
  const ModelSpec spec = ModelSpec::mlp(3, {4}, 3);
  Rng rng(8);
  const Matrix X = random_matrix(5, 3, rng);
  std::vector<PredictionMatrix> mats{public_predictions(spec, init_params(spec, 1), X, 0, 2),
                                     public_predictions(spec, init_params(spec, 2), X, 3, 2)};
  const auto path = temp_file("pred.csv");
  write_predictions_csv(path, mats);
  const std::string text = slurp(path);
  CHECK(text.rfind("round,model_id,example_index,p0,p1,p2\n", 0) == 0);
  const auto back = read_predictions_csv(path);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].model_id == mats[i].model_id);
    CHECK(back[i].round == 2);
    CHECK(back[i].rows == mats[i].rows);
  }

  const auto bad = temp_file("pred_bad.csv");
  dump(bad, "round,model,example_index,p0,p1\n1,0,0,0.5,0.5\n");
  CHECK_THROWS_AS(read_predictions_csv(bad), SchemaError);
  dump(bad, "round,model_id,example_index,p0,p1\n1,0,0,0.5,0.5\n1,0,1,0.5\n");
  try {
    read_predictions_csv(bad);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.line() == 3);
  }
  dump(bad, "round,model_id,example_index,p0,p1\n1,0,0,0.5,0.5\n1,0,2,0.5,0.5\n");
  CHECK_THROWS_AS(read_predictions_csv(bad), SchemaError);
}

TEST_CASE("scores CSV layout") {
  const std::vector<ScoredRow> rows{{0, 0, 0.25, false, false}, {1, 1, 3.5, true, true}, {1, 2, 1.0, true, false}};
  const auto path = temp_file("scores.csv");
  write_scores_csv(path, rows);
  CHECK(slurp(path) ==
        "example_index,score,label_pred,true_label\n"
        "0,0.25,normal,normal\n"
        "1,3.5,anomaly,anomaly\n"
        "2,1,anomaly,normal\n");
}

TEST_CASE("format_double is the shortest round-trip form") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  Rng rng(1);
  std::normal_distribution<double> n(0.0, 1e3);
  for (int i = 0; i < 200; ++i) {
    const double v = n(rng);
    CHECK(std::stod(format_double(v)) == v);
  }
}
