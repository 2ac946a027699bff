#pragma once

#include <vector>

#include "oncoabs/common/error.hpp"
#include "oncoabs/common/rng.hpp"
#include "oncoabs/model/han.hpp"

namespace oncoabs::model {

struct MlmExample {
  text::TokenSequence input;              // corrupted copy
  std::vector<std::size_t> positions;     // indices into input.ids
  std::vector<text::TokenId> targets;     // original ids at those positions
};

/// Selects each non-special token inside a sentence with probability
/// `mask_rate`; a selected token becomes [MASK] 80% of the time, a random
/// non-special token 10%, and stays unchanged 10%.
inline MlmExample mlm_corrupt(const text::TokenSequence& seq, double mask_rate, Rng& rng, std::size_t vocab_size) {
  if (!(mask_rate >= 0.0 && mask_rate <= 1.0)) throw ConfigError("mask_rate", "must be in [0, 1]");
  if (vocab_size <= text::kSpecialCount) throw ConfigError("vocab_size", "must exceed the special-token count");
  MlmExample ex;
  ex.input = seq;
  for (const auto& [b, e] : seq.sentences)
    for (std::size_t i = b; i < e; ++i) {
      const auto id = seq.ids[i];
      if (text::Vocab::is_special(id)) continue;
      if (!rng.bernoulli(mask_rate)) continue;
      ex.positions.push_back(i);
      ex.targets.push_back(id);
      const double u = rng.uniform();
      if (u < 0.8) {
        ex.input.ids[i] = text::kMask;
      } else if (u < 0.9) {
        ex.input.ids[i] = static_cast<text::TokenId>(text::kSpecialCount +
                                                     rng.below(vocab_size - text::kSpecialCount));
      }
    }
  return ex;
}

/// Mean cross-entropy of the original tokens at the selected positions,
/// scored through the embedding matrix (tied output projection) plus a
/// vocabulary bias. Returns nullopt when nothing was selected.
template <typename T>
std::optional<Var<T>> mlm_loss(HanModel<T>& model, Tape<T>& t, const MlmExample& ex, Mode mode) {
  if (model.config().encoder != EncoderKind::TinyTransformer)
    throw UnsupportedError("masked-language-model pretraining needs the transformer encoder");
  if (ex.positions.empty()) return std::nullopt;
  std::vector<std::size_t> ids;
  std::vector<Segment> segs;
  std::vector<std::size_t> flat(ex.input.ids.size(), static_cast<std::size_t>(-1));
  for (const auto& [b, e] : ex.input.sentences) {
    const std::size_t start = ids.size();
    for (std::size_t i = b; i < e; ++i) {
      flat[i] = ids.size();
      ids.push_back(ex.input.ids[i]);
    }
    segs.emplace_back(start, ids.size());
  }
  std::vector<std::size_t> rows, targets;
  for (std::size_t k = 0; k < ex.positions.size(); ++k) {
    if (flat.at(ex.positions[k]) == static_cast<std::size_t>(-1))
      throw DimensionError("masked position outside every sentence");
    rows.push_back(flat[ex.positions[k]]);
    targets.push_back(ex.targets[k]);
  }
  auto x = model.encode(t, model.embed(t, ids, segs, mode), segs, mode);
  auto picked = num::gather_rows(x, std::move(rows));
  auto logits = num::add(num::matmul(picked, num::transpose(model.bind(t, "embedding"))), model.bind(t, "mlm.bias"));
  return num::cross_entropy(logits, std::move(targets));
}

}  // namespace oncoabs::model
