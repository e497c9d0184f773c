#include <filesystem>
#include <sstream>
#include <string>

#include "doctest.h"
#include "ernn/checkpoint.hpp"
#include "ernn/errors.hpp"
#include "support.hpp"

using namespace ernn;

namespace {

std::string serialize(const ErnnParams& p) {
  std::ostringstream out;
  write_checkpoint(out, p);
  return out.str();
}

ErnnParams deserialize(const std::string& text) {
  std::istringstream in(text);
  return read_checkpoint(in);
}

std::string format_error(const std::string& text) {
  try {
    deserialize(text);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("round trip is exact for every cell kind") {
  Xoshiro256ss rng(61);
  for (CellKind kind : {CellKind::vanilla_rnn, CellKind::ernn_toy, CellKind::ernn_exemplar,
                        CellKind::fastrnn}) {
    const std::size_t K = kind == CellKind::ernn_toy || kind == CellKind::ernn_exemplar ? 3 : 1;
    auto p = ErnnParams::initialize(kind, default_activation(kind), {5, 2, 4, K, 3}, rng.next());
    for (auto& v : p.eta.span()) v = rng.uniform(-1, 1) * 1e-7;
    p.b[0] = 1.0 / 3.0;
    p.classifier_bias[2] = -2.5e-300;
    const auto back = deserialize(serialize(p));
    CHECK(back == p);
    CHECK(serialize(back) == serialize(p));
  }
}

TEST_CASE("file round trip") {
  const auto p = ErnnParams::initialize(CellKind::ernn_exemplar, Activation::tanh, {3, 1, 2, 2, 2}, 4);
  const auto path = std::filesystem::temp_directory_path() / "ernn_test_ckpt.txt";
  save_checkpoint(path, p);
  CHECK(load_checkpoint(path) == p);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
}

TEST_CASE("header layout") {
  const auto p = ErnnParams::zeros(CellKind::fastrnn, Activation::relu, {2, 3, 4, 1, 5});
  std::istringstream in(serialize(p));
  std::string line;
  std::getline(in, line);
  CHECK(line == "ernn-ckpt v1");
  std::getline(in, line);
  CHECK(line == "fastrnn 2 3 4 1 5 relu");
  std::getline(in, line);
  CHECK(line == "U 2 2");
}

TEST_CASE("malformed checkpoints are rejected") {
  const auto p = ErnnParams::zeros(CellKind::ernn_toy, Activation::tanh, {2, 1, 2, 1, 2});
  const std::string good = serialize(p);
  CHECK(format_error("").find("line 1") != std::string::npos);
  CHECK_FALSE(format_error("ernn-ckpt v2\n" + good.substr(good.find('\n') + 1)).empty());
  CHECK_FALSE(format_error("garbage\n").empty());

  std::string bad_kind = good;
  bad_kind.replace(bad_kind.find("ernn-toy"), 8, "lstm-toy");
  CHECK(format_error(bad_kind).find("line 2") != std::string::npos);

  std::string bad_label = good;
  bad_label.replace(bad_label.find("\nV "), 3, "\nX ");
  CHECK_FALSE(format_error(bad_label).empty());

  std::string bad_value = good;
  bad_value.replace(bad_value.find("\nV 2 2\n") + 7, 1, "z");
  CHECK_FALSE(format_error(bad_value).empty());

  CHECK_FALSE(format_error(good.substr(0, good.size() / 2)).empty());
}
