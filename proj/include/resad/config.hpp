#pragma once
//
// Run configuration. Text form is one `key = value` per line; `#` starts a
// comment, blank lines are ignored, unknown keys are errors. Absent keys keep
// their defaults.
//

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace resad {

struct RunConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr = 1e-5;
  double weight_decay = 5e-4;
  std::vector<std::size_t> milestones{70, 90};
  double lambda = 0.001;
  double t = 1.0;
  double a = 1.0;
  std::size_t codebook_size = 1536;
  double fdm_alpha = 0.4;
  double vq_beta = 0.25;
  double focal_gamma = 2.0;
  std::size_t coupling_blocks = 10;
  double clamp = 1.9;
  std::size_t n_fs = 4;
  std::uint64_t seed = 42;
  bool use_residual = true;
  bool use_constraintor = true;
  bool use_ai_occ = true;
  bool use_fdm = true;
  bool use_mac = true;
  // Stop flow-loss gradients at the constraintor output. Off lets the
  // density loss pull abnormal features onto the hypersphere too.
  bool detach_flow_input = true;
  // Shift each layer's log-density by its maximum over the evaluated images
  // before the likelihood score, so layers share the (-inf, 0] range.
  bool normalize_density = true;

  // Throws ValidationError on out-of-range values.
  void validate() const;
  // Canonical text; parse_config(to_text()) reproduces the config exactly.
  std::string to_text() const;
  // FNV-1a 64 of to_text().
  std::uint64_t hash() const;
  bool operator==(const RunConfig&) const = default;
};

// Applies `key = value` lines on top of `base`.
RunConfig parse_config(std::string_view text, const RunConfig& base = {});
RunConfig read_config(const std::filesystem::path& path);
// Single `key=value` override, as given on the command line.
void apply_override(RunConfig& cfg, std::string_view assignment);

std::uint64_t fnv1a64(std::string_view text);

}  // namespace resad
