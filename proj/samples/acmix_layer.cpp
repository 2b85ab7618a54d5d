// One ACmix layer: forward, path split, gradient of the mixing scalars, checkpoint.

#include <cstdio>
#include <random>

#include "acmix/acmix.hpp"
#include "acmix/serialize.hpp"

int main(int argc, char** argv) {
  acmix::ACmixConfig cfg;
  cfg.in_channels = 8;
  cfg.out_channels = 8;
  cfg.heads = 2;
  cfg.attn_kernel = 5;
  cfg.conv_kernel = 3;
  cfg.positional_encoding = true;

  std::mt19937_64 rng(7);
  acmix::ACmixParams params = acmix::ACmixParams::init(cfg, rng);
  params.alpha = 0.7;
  params.beta = 0.4;
  const acmix::Tensor x = acmix::random_tensor({2, 8, 12, 12}, rng);

  const acmix::ACmixOutputs o = acmix::acmix_forward_parts(x, params, cfg);
  std::printf("output %s\n", o.out.shape().str().c_str());
  std::printf("sum(F_att) = %.6f, sum(F_conv) = %.6f\n", acmix::sum(o.attention), acmix::sum(o.conv));

  const acmix::Tensor ones(o.out.shape(), 1.0);
  const acmix::ACmixGrads g = acmix::acmix_backward(x, params, cfg, ones);
  std::printf("dL/dalpha = %.6f, dL/dbeta = %.6f\n", g.alpha, g.beta);

  const acmix::ParamCount c = acmix::count_params_live(params);
  std::printf("params: Stage I %zu, Stage II %zu, positional %zu\n", c.stage1, c.stage2, c.positional);

  if (argc > 1) {
    acmix::write_text_file(argv[1], acmix::checkpoint_to_json(cfg, params).dump(2) + "\n");
    std::printf("checkpoint written to %s\n", argv[1]);
  }
  return 0;
}
