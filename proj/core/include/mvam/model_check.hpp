#pragma once

#include <cstdint>

#include "mvam/grad_check.hpp"
#include "mvam/model.hpp"

namespace mvam {

// d_e = 8, d_c = 6, k = 3, |Y| = 5, d_ff = 16.
ModelConfig tiny_model_config();

struct ModelGradCheckOptions {
  std::size_t docs = 2;
  std::size_t min_length = 5;
  std::size_t max_length = 12;
  std::size_t vocab_words = 30;
  std::uint64_t seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Parameters are redrawn from U(-scale, scale) so that no gradient is
  // vanishingly small relative to finite-difference noise.
  double param_scale = 0.5;
  bool train_mode = true;  // exercises dropout with a fixed mask
};

// Central-difference check of the BCE loss of a random synthetic batch
// against every trainable tensor. vocab_size and num_labels of `config` are
// filled in from the generated batch when zero.
GradCheckReport check_model_gradients(ModelConfig config,
                                      const ModelGradCheckOptions& options = {});

}  // namespace mvam
