#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "protoset/dataset.hpp"
#include "protoset/training.hpp"

namespace protoset {

using KeyValues = std::map<std::string, std::string>;

/// Flat `key=value` text; `#` starts a comment, blank lines are skipped.
/// Throws ParseError naming the line on malformed input.
KeyValues parse_key_values(const std::string& text);
KeyValues load_key_values(const std::filesystem::path& path);

/// Applies recognised keys to the configs. Unknown keys or bad values throw
/// ConfigError. Training keys: r, k, beta, tau, lambda, lr, momentum,
/// weight_decay, epochs, seed, d_in, d, hidden, eps_mass, jitter, plus layers,
/// batch, pairs_per_epoch, genuine_fraction, lr_drop_iter, lr_drop_factor,
/// balance, init_std, predictor_init_std, gate_init_std. Synthetic-data keys:
/// subjects, modes, sets_per_subject, min_media, max_media, mode_noise,
/// mode_offset, mode_sharing, condition_seed, video_fraction.
void apply_config(const KeyValues& kv, TrainConfig& train, SynthConfig& synth);

std::string to_key_values(const TrainConfig& cfg);

}  // namespace protoset
