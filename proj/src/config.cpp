#include "resad/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "resad/errors.hpp"
#include "resad/feature_store.hpp"

namespace resad {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t parse_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ValidationError("config key '" + std::string(key) + "': expected a non-negative integer, got '" +
                          std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ValidationError("config key '" + std::string(key) + "': expected a finite number, got '" +
                          std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ValidationError("config key '" + std::string(key) + "': expected true/false, got '" + std::string(v) + "'");
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto item = trim(v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    out.push_back(parse_size(key, item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_FIELD(name)                                                                       \
  Field{#name, [](RunConfig& c, std::string_view v) { c.name = parse_size(#name, v); },       \
        [](const RunConfig& c) { return std::to_string(c.name); }}
#define DOUBLE_FIELD(name)                                                                     \
  Field{#name, [](RunConfig& c, std::string_view v) { c.name = parse_double(#name, v); },     \
        [](const RunConfig& c) { return fmt_double(c.name); }}
#define BOOL_FIELD(name)                                                                       \
  Field{#name, [](RunConfig& c, std::string_view v) { c.name = parse_bool(#name, v); },       \
        [](const RunConfig& c) { return std::string(c.name ? "true" : "false"); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      SIZE_FIELD(epochs),
      SIZE_FIELD(batch_size),
      DOUBLE_FIELD(lr),
      DOUBLE_FIELD(weight_decay),
      Field{"milestones", [](RunConfig& c, std::string_view v) { c.milestones = parse_list("milestones", v); },
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.milestones.size(); ++i) {
                if (i) s += ",";
                s += std::to_string(c.milestones[i]);
              }
              return s;
            }},
      DOUBLE_FIELD(lambda),
      DOUBLE_FIELD(t),
      DOUBLE_FIELD(a),
      SIZE_FIELD(codebook_size),
      DOUBLE_FIELD(fdm_alpha),
      DOUBLE_FIELD(vq_beta),
      DOUBLE_FIELD(focal_gamma),
      SIZE_FIELD(coupling_blocks),
      DOUBLE_FIELD(clamp),
      SIZE_FIELD(n_fs),
      Field{"seed", [](RunConfig& c, std::string_view v) { c.seed = parse_size("seed", v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      BOOL_FIELD(use_residual),
      BOOL_FIELD(use_constraintor),
      BOOL_FIELD(use_ai_occ),
      BOOL_FIELD(use_fdm),
      BOOL_FIELD(use_mac),
      BOOL_FIELD(detach_flow_input),
      BOOL_FIELD(normalize_density),
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD

void set_field(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ValidationError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("config: " + m); };
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (weight_decay < 0.0) fail("weight_decay must be non-negative");
  if (lambda < 0.0) fail("lambda must be non-negative");
  if (!(t > 0.0)) fail("t must be positive");
  if (!(a > 0.0)) fail("a must be positive");
  if (codebook_size == 0) fail("codebook_size must be positive");
  if (!(fdm_alpha >= 0.0 && fdm_alpha <= 1.0)) fail("fdm_alpha must lie in [0, 1]");
  if (!(vq_beta > 0.0)) fail("vq_beta must be positive");
  if (focal_gamma < 0.0) fail("focal_gamma must be non-negative");
  if (coupling_blocks == 0) fail("coupling_blocks must be positive");
  if (!(clamp > 0.0)) fail("clamp must be positive");
  if (n_fs == 0) fail("n_fs must be positive");
  for (std::size_t i = 1; i < milestones.size(); ++i) {
    if (milestones[i] <= milestones[i - 1]) fail("milestones must be strictly increasing");
  }
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(to_text()); }

RunConfig parse_config(std::string_view text, const RunConfig& base) {
  RunConfig cfg = base;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    set_field(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

RunConfig read_config(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw UsageError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  set_field(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  cfg.validate();
}

}  // namespace resad
