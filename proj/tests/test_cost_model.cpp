#include <gtest/gtest.h>

#include <cmath>

#include "acmix/cost_model.hpp"

using namespace acmix;

namespace {

LayerSpec pixel(LayerKind kind, std::uint64_t C) {
  LayerSpec s;
  s.kind = kind;
  s.c_in = s.c_out = C;
  s.h = s.w = 1;
  s.k_c = 3;
  s.k_a = 7;
  s.heads = 4;
  return s;
}

double g(std::uint64_t flops) { return static_cast<double>(flops) / 1e9; }

}  // namespace

TEST(LayerCost, PerPixelFormulas) {
  const CostReport conv = layer_cost(pixel(LayerKind::conv, 64));
  EXPECT_EQ(conv.stage1_flops, 36864u);
  EXPECT_EQ(conv.stage1_params, 36864u);
  EXPECT_EQ(conv.stage2_flops, 576u);
  EXPECT_EQ(conv.stage2_params, 0u);

  const CostReport sa = layer_cost(pixel(LayerKind::self_attention, 64));
  EXPECT_EQ(sa.stage1_flops, 12288u);
  EXPECT_EQ(sa.stage1_params, 12288u);
  EXPECT_EQ(sa.stage2_flops, 6272u);
  EXPECT_GT(sa.stage1_flops, sa.stage2_flops);

  const CostReport mix = layer_cost(pixel(LayerKind::acmix, 64));
  EXPECT_EQ(mix.stage1_flops, 12288u);
  EXPECT_EQ(mix.stage1_params, 12288u);
  EXPECT_EQ(mix.stage2_flops, (9u + 2u * 49u) * 64u + (27u + 81u) * 64u);
  EXPECT_EQ(mix.stage2_params, 5292u);
}

TEST(LayerCost, ScalesWithFeatureMapArea) {
  LayerSpec s = pixel(LayerKind::conv, 64);
  s.h = s.w = 56;
  EXPECT_EQ(layer_cost(s).stage1_flops, 36864u * 3136u);
  EXPECT_EQ(layer_cost(s).stage1_params, 36864u);
}

TEST(LayerCost, DoublingChannelsScalesStagesByFourAndTwo) {
  for (LayerKind kind : {LayerKind::conv, LayerKind::self_attention, LayerKind::acmix})
    for (std::uint64_t C : {32u, 64u, 256u}) {
      const CostReport a = layer_cost(pixel(kind, C)), b = layer_cost(pixel(kind, 2 * C));
      EXPECT_EQ(b.stage1_flops, 4 * a.stage1_flops) << to_string(kind) << " C=" << C;
      EXPECT_EQ(b.stage2_flops, 2 * a.stage2_flops) << to_string(kind) << " C=" << C;
    }
}

TEST(LayerCost, AttentionStageOneShareGrowsWithChannels) {
  double prev = 0.0;
  for (std::uint64_t C : {16u, 32u, 64u, 128u, 256u, 512u}) {
    const double f = layer_cost(pixel(LayerKind::self_attention, C)).stage1_flop_fraction();
    EXPECT_GT(f, prev) << "C=" << C;
    prev = f;
  }
}

TEST(LayerCost, FractionsSumToOne) {
  for (LayerKind kind : {LayerKind::conv, LayerKind::self_attention, LayerKind::acmix}) {
    const CostReport r = layer_cost(pixel(kind, 96));
    EXPECT_DOUBLE_EQ(r.stage1_flop_fraction() + r.stage2_flop_fraction(), 1.0);
  }
}

TEST(LayerCost, StrideChargesConvAtOutputResolution) {
  LayerSpec s = pixel(LayerKind::conv, 8);
  s.h = s.w = 8;
  s.stride = 2;
  EXPECT_EQ(layer_cost(s).stage1_flops, 9u * 64u * 16u);
  s.kind = LayerKind::self_attention;
  EXPECT_EQ(layer_cost(s).stage1_flops, 3u * 64u * 64u);
  s.h = s.w = 7;
  EXPECT_EQ(s.out_h(), 4u);
}

TEST(LayerCost, SpatialReductionShrinksKeys) {
  LayerSpec s = pixel(LayerKind::self_attention, 64);
  s.attention = AttentionKind::global;
  s.h = s.w = 56;
  s.kv_reduction = 8;
  EXPECT_EQ(s.field(), 49u);
  const CostReport r = layer_cost(s);
  EXPECT_EQ(r.stage2_flops, 49u * 128u * 3136u);
  EXPECT_EQ(r.stage1_params, 3u * 64u * 64u + 64u * 64u * 64u);
}

TEST(LayerCost, RepeatMultipliesEverything) {
  LayerSpec s = pixel(LayerKind::acmix, 32);
  s.positional_encoding = true;
  const CostReport one = layer_cost(s);
  s.repeat = 3;
  const CostReport three = layer_cost(s);
  EXPECT_EQ(three.stage2_flops, 3 * one.stage2_flops);
  EXPECT_EQ(three.stage2_params, 3 * one.stage2_params);
  EXPECT_EQ(three.positional_params, 3 * one.positional_params);
  EXPECT_EQ(one.positional_params, 4u * 13u * 13u);
}

TEST(LayerCost, Validation) {
  LayerSpec s = pixel(LayerKind::acmix, 64);
  s.heads = 3;
  EXPECT_THROW(layer_cost(s), std::invalid_argument);
  s = pixel(LayerKind::acmix, 64);
  s.k_c = 4;
  EXPECT_THROW(layer_cost(s), std::invalid_argument);
  s = pixel(LayerKind::self_attention, 64);
  s.kv_reduction = 2;
  EXPECT_THROW(layer_cost(s), std::invalid_argument);
  s = pixel(LayerKind::conv, 0);
  EXPECT_THROW(layer_cost(s), std::invalid_argument);
}

TEST(Presets, ResNet50Modules) {
  const CostReport conv = architecture_cost(preset("resnet50", OperatorChoice::conv));
  EXPECT_NEAR(g(conv.stage1_flops), 1.85, 0.01);
  EXPECT_NEAR(g(conv.stage2_flops), 0.0124, 0.001);
  const CostReport sa = architecture_cost(preset("resnet50", OperatorChoice::attention));
  EXPECT_NEAR(g(sa.stage1_flops), 0.96, 0.01);
  EXPECT_NEAR(g(sa.stage2_flops), 0.19, 0.01);
  EXPECT_NEAR(sa.stage1_flop_fraction(), 0.83, 0.03);
  const CostReport mix = architecture_cost(preset("resnet50", OperatorChoice::acmix));
  EXPECT_EQ(mix.stage1_flops, sa.stage1_flops);
  EXPECT_NEAR(g(mix.stage2_flops), 0.35, 0.02);
  EXPECT_NEAR(mix.stage2_flop_fraction(), 0.27, 0.03);
}

TEST(Presets, ResNet50WholeModel) {
  const CostReport r = architecture_cost(preset("ResNet-50", OperatorChoice::conv));
  ASSERT_TRUE(r.whole_model);
  EXPECT_NEAR(g(r.total_flops()) / 4.1, 1.0, 0.05);
  EXPECT_NEAR(static_cast<double>(r.total_params()) / 25.6e6, 1.0, 0.05);
}

TEST(Presets, SwinT) {
  const CostReport sa = architecture_cost(preset("swin-t", OperatorChoice::attention));
  EXPECT_NEAR(g(sa.stage1_flops), 1.04, 0.01);
  EXPECT_NEAR(g(sa.stage2_flops), 0.49, 0.01);
  EXPECT_NEAR(g(sa.total_flops()) / 4.5, 1.0, 0.05);
  EXPECT_NEAR(static_cast<double>(sa.total_params()) / 29e6, 1.0, 0.05);
  const CostReport mix = architecture_cost(preset("swin_t", OperatorChoice::acmix));
  EXPECT_NEAR(mix.stage2_flop_fraction(), 0.38, 0.03);
}

TEST(Presets, ModuleTalliesExcludeOtherLayers) {
  const CostReport r = architecture_cost(preset("resnet26", OperatorChoice::conv));
  std::uint64_t module = 0, other = 0;
  for (const LayerCost& c : r.layers) (c.module ? module : other) += c.flops();
  EXPECT_EQ(module, r.module_flops());
  EXPECT_EQ(other, r.other_flops);
  EXPECT_GT(other, 0u);
}

TEST(Presets, NamesAndErrors) {
  for (const std::string& n : preset_names()) {
    EXPECT_TRUE(is_preset(n));
    EXPECT_NO_THROW(architecture_cost(preset(n, default_operator(n)))) << n;
    EXPECT_NO_THROW(architecture_cost(preset(n, OperatorChoice::acmix))) << n;
  }
  EXPECT_EQ(default_operator("resnet38"), OperatorChoice::conv);
  EXPECT_EQ(default_operator("san10"), OperatorChoice::attention);
  EXPECT_THROW(preset("resnet51", OperatorChoice::conv), std::invalid_argument);
  EXPECT_THROW(preset("swin-t", OperatorChoice::conv), std::invalid_argument);
  EXPECT_THROW(parse_operator("mlp"), std::invalid_argument);
}

TEST(ArchitectureJson, SingleConvSpec) {
  const auto j = nlohmann::json::parse(R"({"name": "one", "layers": [{"kind": "conv", "c_in": 64, "h": 56}]})");
  const ArchitectureSpec a = architecture_from_json(j);
  ASSERT_EQ(a.layers.size(), 1u);
  EXPECT_EQ(a.layers[0].c_out, 64u);
  EXPECT_EQ(a.layers[0].w, 56u);
  EXPECT_EQ(architecture_cost(a).stage1_flops, 36864u * 3136u);
}

TEST(ArchitectureJson, RoundTripsPresets) {
  for (const char* n : {"resnet50", "san19", "pvt-s", "swin-t"}) {
    const ArchitectureSpec a = preset(n, OperatorChoice::acmix);
    const ArchitectureSpec b = architecture_from_json(nlohmann::json::parse(architecture_to_json(a).dump()));
    const CostReport ra = architecture_cost(a), rb = architecture_cost(b);
    EXPECT_EQ(ra.stage1_flops, rb.stage1_flops) << n;
    EXPECT_EQ(ra.stage2_flops, rb.stage2_flops) << n;
    EXPECT_EQ(ra.total_params(), rb.total_params()) << n;
    EXPECT_EQ(ra.positional_params, rb.positional_params) << n;
  }
}

TEST(ArchitectureJson, Errors) {
  EXPECT_THROW(architecture_from_json(nlohmann::json::parse(R"({"layers": []})")), std::invalid_argument);
  EXPECT_THROW(architecture_from_json(nlohmann::json::parse(R"({"name": "x"})")), std::invalid_argument);
  EXPECT_THROW(layer_from_json(nlohmann::json::parse(R"({"kind": "conv", "c_in": 4, "kernel": 3})")),
               std::invalid_argument);
  EXPECT_THROW(layer_from_json(nlohmann::json::parse(R"({"kind": "mlp", "c_in": 4})")), std::invalid_argument);
  EXPECT_THROW(layer_from_json(nlohmann::json::parse(R"({"c_in": 4})")), nlohmann::json::exception);
}

TEST(CostReportJson, CarriesStageFractions) {
  const nlohmann::json j = report_to_json(architecture_cost(preset("resnet50", OperatorChoice::attention)));
  EXPECT_EQ(j.at("flops_convention"), "1 MAC = 1 FLOP");
  const double f1 = j.at("module").at("stage1_flop_fraction"), f2 = j.at("module").at("stage2_flop_fraction");
  EXPECT_NEAR(f1 + f2, 1.0, 1e-12);
  EXPECT_TRUE(j.contains("whole_model"));
  EXPECT_NE(report_to_text(architecture_cost(preset("resnet50", OperatorChoice::conv))).find("whole model"),
            std::string::npos);
}
