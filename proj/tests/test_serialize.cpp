#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "acmix/serialize.hpp"

using namespace acmix;

namespace {

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(TensorJson, RoundTripIsBitwise) {
  std::mt19937_64 rng(71);
  Tensor t = random_tensor({2, 3, 4, 5}, rng);
  t.data()[0] = 1e-310;
  t.data()[1] = -0.0;
  t.data()[2] = 0.1;
  const Tensor back = tensor_from_json(json::parse(tensor_to_json(t).dump()));
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_TRUE(bitwise_equal(back.data(), t.data()));
}

TEST(TensorJson, Errors) {
  json j = tensor_to_json(Tensor({1, 1, 2, 2}));
  j["format"] = "npy";
  EXPECT_THROW(tensor_from_json(j), FormatError);
  j = tensor_to_json(Tensor({1, 1, 2, 2}));
  j["shape"] = {1, 2, 2};
  EXPECT_THROW(tensor_from_json(j), FormatError);
  j = tensor_to_json(Tensor({1, 1, 2, 2}));
  j["data"] = {1.0, 2.0};
  EXPECT_THROW(tensor_from_json(j), ShapeError);
}

TEST(Checkpoint, RoundTripReproducesForwardExactly) {
  std::mt19937_64 rng(72);
  for (AttentionKind kind : {AttentionKind::local, AttentionKind::patchwise, AttentionKind::window}) {
    ACmixConfig cfg;
    cfg.attention = kind;
    cfg.positional_encoding = kind != AttentionKind::patchwise;
    cfg.mix = MixMode::alpha_complement;
    ACmixParams p = ACmixParams::init(cfg, rng, BankInit::learnable_random);
    if (p.pos) fill_uniform(p.pos->data(), rng);
    p.alpha = 0.37;
    p.beta = -2.5;
    const Checkpoint ck = checkpoint_from_json(json::parse(checkpoint_to_json(cfg, p).dump()));
    EXPECT_EQ(ck.config.mix, cfg.mix);
    EXPECT_EQ(ck.config.attention, kind);
    EXPECT_EQ(ck.params.alpha, p.alpha);
    EXPECT_EQ(ck.params.beta, p.beta);
    EXPECT_EQ(ck.params.bank.init(), BankInit::learnable_random);
    EXPECT_TRUE(bitwise_equal(ck.params.bank.data(), p.bank.data()));
    const Tensor x = random_tensor({1, 4, 5, 5}, rng);
    const Tensor a = acmix_forward(x, p, cfg), b = acmix_forward(x, ck.params, ck.config);
    EXPECT_TRUE(bitwise_equal(a.data(), b.data())) << to_string(kind);
  }
}

TEST(Checkpoint, Errors) {
  std::mt19937_64 rng(73);
  ACmixConfig cfg;
  const ACmixParams p = ACmixParams::init(cfg, rng);
  json j = checkpoint_to_json(cfg, p);
  json bad = j;
  bad["format"] = "acmix.tensor";
  EXPECT_THROW(checkpoint_from_json(bad), FormatError);
  bad = j;
  bad["arrays"].erase("fc.1");
  EXPECT_THROW(checkpoint_from_json(bad), FormatError);
  bad = j;
  bad["arrays"]["bank"]["data"].erase(0);
  EXPECT_THROW(checkpoint_from_json(bad), FormatError);
  bad = j;
  bad["bank_init"] = "frozen";
  EXPECT_THROW(checkpoint_from_json(bad), FormatError);
  bad = j;
  bad["config"]["heads"] = 3;
  EXPECT_THROW(checkpoint_from_json(bad), std::invalid_argument);
}

TEST(Files, WriteThenRead) {
  const auto path = std::filesystem::temp_directory_path() / "acmix_serialize_test.json";
  write_text_file(path.string(), tensor_to_json(Tensor({1, 1, 1, 1}, 4.5)).dump());
  EXPECT_EQ(tensor_from_json(read_json_file(path.string()))(0, 0, 0, 0), 4.5);
  std::filesystem::remove(path);
  EXPECT_THROW(read_json_file(path.string()), std::runtime_error);
}
