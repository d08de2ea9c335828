#include "resad/pipeline.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "resad/bytes.hpp"
#include "resad/errors.hpp"
#include "resad/optim.hpp"
#include "resad/rng.hpp"

namespace resad {

namespace {

constexpr char kCkptMagic[4] = {'R', 'S', 'C', 'K'};

// Stream tags for mix_seed, so every random draw has its own generator.
constexpr std::uint64_t kConstraintorStream = 0xC0;
constexpr std::uint64_t kFlowStream = 0xF1;
constexpr std::uint64_t kCodebookStream = 0xCB;
constexpr std::uint64_t kReferenceStream = 0x5EF;
constexpr std::uint64_t kShuffleStream = 0xBA7C;

Tensor to_tensor(const FeatureMatrix& m) { return Tensor(Shape{m.rows, m.cols}, m.values); }

FeatureMatrix to_matrix(const Tensor& t) {
  FeatureMatrix m(t.rows(), t.cols());
  std::copy(t.data().begin(), t.data().end(), m.values.begin());
  return m;
}

}  // namespace

// ===========================================================================
// Model and checkpoint

Model Model::init(const RunConfig& config, std::uint32_t image_height, std::uint32_t image_width,
                  std::span<const LayerSpec> layers) {
  config.validate();
  if (layers.empty()) throw ContractError("model needs at least one feature layer");
  Model m;
  m.config = config;
  m.image_height = image_height;
  m.image_width = image_width;
  m.layers.assign(layers.begin(), layers.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Rng c_rng(mix_seed(config.seed, l, kConstraintorStream));
    m.constraintors.push_back(ConstraintorLayer<float>::init(layers[l].channels, c_rng));
    Rng f_rng(mix_seed(config.seed, l, kFlowStream));
    m.flows.push_back(FlowLayer<float>::init(layers[l].channels, config.coupling_blocks, config.clamp, f_rng));
    m.codebooks.push_back(Codebook{Tensor::zeros({config.codebook_size, layers[l].channels}, true)});
  }
  return m;
}

namespace {

template <typename Range>
void put_block(ByteWriter& w, const Range& values) {
  w.u32(static_cast<std::uint32_t>(std::size(values)));
  for (auto v : values) w.f32(static_cast<float>(v));
}

std::vector<float> get_block(ByteReader& r, std::size_t expected, const char* what) {
  const std::uint32_t n = r.u32();
  if (n != expected) {
    throw ValidationError(std::string("checkpoint block '") + what + "' holds " + std::to_string(n) +
                          " values, expected " + std::to_string(expected));
  }
  std::vector<float> out(n);
  for (auto& v : out) v = r.f32();
  return out;
}

void fill(Tensor& t, ByteReader& r, const char* what) {
  const auto vals = get_block(r, t.numel(), what);
  std::copy(vals.begin(), vals.end(), t.mutable_data().begin());
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const Model& model) {
  ByteWriter w;
  w.bytes({reinterpret_cast<const std::uint8_t*>(kCkptMagic), 4});
  w.u32(kCheckpointVersion);
  const std::string cfg = model.config.to_text();
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.bytes({reinterpret_cast<const std::uint8_t*>(cfg.data()), cfg.size()});
  w.u32(model.image_height);
  w.u32(model.image_width);
  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& l : model.layers) {
    w.u32(l.height);
    w.u32(l.width);
    w.u32(l.channels);
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& c = model.constraintors[l];
    for (const auto& t : c.parameters()) put_block(w, t.data());
    put_block(w, c.running_mean);
    put_block(w, c.running_var);
    const auto& f = model.flows[l];
    w.u32(static_cast<std::uint32_t>(f.blocks.size()));
    for (const auto& b : f.blocks) {
      put_block(w, b.w1.data());
      put_block(w, b.b1.data());
      put_block(w, b.w2.data());
      put_block(w, b.b2.data());
      put_block(w, b.permutation);
      put_block(w, b.fixed_scale);
    }
    put_block(w, model.codebooks[l].embeddings.data());
  }
  return w.take();
}

Model parse_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kCkptMagic)) throw FormatError("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t cfg_len = r.u32();
  const auto cfg_bytes = r.bytes(cfg_len);
  const RunConfig cfg =
      parse_config(std::string_view(reinterpret_cast<const char*>(cfg_bytes.data()), cfg_bytes.size()));
  const std::uint32_t h0 = r.u32(), w0 = r.u32(), n_layers = r.u32();
  std::vector<LayerSpec> layers(n_layers);
  for (auto& l : layers) {
    l.height = r.u32();
    l.width = r.u32();
    l.channels = r.u32();
  }
  Model m = Model::init(cfg, h0, w0, layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    auto& c = m.constraintors[l];
    fill(c.conv_a_weight, r, "conv_a_weight");
    fill(c.conv_a_bias, r, "conv_a_bias");
    fill(c.bn_gamma, r, "bn_gamma");
    fill(c.bn_beta, r, "bn_beta");
    fill(c.conv_b_weight, r, "conv_b_weight");
    fill(c.conv_b_bias, r, "conv_b_bias");
    const auto rm = get_block(r, c.running_mean.size(), "running_mean");
    const auto rv = get_block(r, c.running_var.size(), "running_var");
    c.running_mean.assign(rm.begin(), rm.end());
    c.running_var.assign(rv.begin(), rv.end());
    auto& f = m.flows[l];
    const std::uint32_t n_blocks = r.u32();
    if (n_blocks != f.blocks.size()) throw ValidationError("checkpoint coupling block count disagrees with config");
    for (auto& b : f.blocks) {
      fill(b.w1, r, "w1");
      fill(b.b1, r, "b1");
      fill(b.w2, r, "w2");
      fill(b.b2, r, "b2");
      const auto perm = get_block(r, f.channels, "permutation");
      std::vector<bool> seen(f.channels, false);
      for (std::size_t j = 0; j < perm.size(); ++j) {
        const auto p = static_cast<std::size_t>(perm[j]);
        if (perm[j] < 0.0f || p >= f.channels || static_cast<float>(p) != perm[j] || seen[p]) {
          throw ValidationError("checkpoint permutation is not a bijection");
        }
        seen[p] = true;
        b.permutation[j] = p;
      }
      const auto scale = get_block(r, f.channels, "fixed_scale");
      b.fixed_scale.assign(scale.begin(), scale.end());
    }
    fill(m.codebooks[l].embeddings, r, "codebook");
  }
  if (r.remaining() != 0) throw ValidationError("trailing bytes after checkpoint payload");
  return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  write_file_bytes(path, bytes);
}

Model load_model(const std::filesystem::path& path) { return parse_model(read_file_bytes(path)); }

// ===========================================================================
// Reference pools

ReferenceMap draw_references(const FeatureDataset& dataset, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("reference count must be positive");
  ReferenceMap out;
  for (std::uint32_t k : class_ids(dataset)) {
    std::vector<std::size_t> normals;
    for (std::size_t i : images_of_class(dataset, k)) {
      if (dataset.images[i].label == 0) normals.push_back(i);
    }
    if (normals.size() < n) {
      throw ContractError("class " + std::to_string(k) + " has " + std::to_string(normals.size()) +
                          " normal images, " + std::to_string(n) + " references requested");
    }
    Rng rng(mix_seed(seed, k, kReferenceStream));
    std::vector<std::size_t> pick;
    for (std::size_t j : rng.sample_without_replacement(normals.size(), n)) pick.push_back(normals[j]);
    std::sort(pick.begin(), pick.end());
    out[k] = std::move(pick);
  }
  return out;
}

PoolMap build_pools(const FeatureDataset& dataset, const ReferenceMap& refs) {
  PoolMap pools;
  for (const auto& [k, idx] : refs) {
    for (std::size_t i : idx) {
      if (i < dataset.images.size() && dataset.images[i].class_id != k) {
        throw ContractError("reference image " + std::to_string(i) + " is not of class " + std::to_string(k));
      }
    }
    pools[k] = build_reference_pool(dataset, idx);
  }
  return pools;
}

std::vector<std::size_t> flatten_references(const ReferenceMap& refs) {
  std::vector<std::size_t> out;
  for (const auto& [k, idx] : refs) out.insert(out.end(), idx.begin(), idx.end());
  std::sort(out.begin(), out.end());
  return out;
}

// ===========================================================================
// Per-layer pipeline stages

FeatureMatrix prepare_layer(const Model& model, const FeatureMatrix& features, const ReferencePool* pool,
                            std::size_t layer, bool apply_fdm) {
  FeatureMatrix x = features;
  if (model.config.use_residual) {
    if (pool == nullptr) throw ContractError("residual features need a reference pool");
    x = to_residual_layer(features, pool->layers[layer]);
  }
  if (apply_fdm) x = fdm_apply(x, model.codebooks[layer], model.config.fdm_alpha);
  return x;
}

FeatureMatrix constrain_layer(const Model& model, const FeatureMatrix& features, std::size_t layer) {
  if (!model.config.use_constraintor) return features;
  return to_matrix(model.constraintors[layer].forward_eval(to_tensor(features)));
}

// ===========================================================================
// Training

namespace {

struct PreparedImage {
  std::vector<FeatureMatrix> inputs;               // per layer
  std::vector<std::vector<std::uint8_t>> labels;  // per layer, per position
};

struct BatchRows {
  Tensor x;
  std::vector<std::uint8_t> labels;
  std::vector<std::size_t> normal;
  std::vector<std::size_t> abnormal;
};

BatchRows stack_layer(const std::vector<PreparedImage>& prepared, std::span<const std::size_t> batch,
                      std::size_t layer) {
  const std::size_t cols = prepared[batch[0]].inputs[layer].cols;
  std::size_t rows = 0;
  for (std::size_t i : batch) rows += prepared[i].inputs[layer].rows;
  std::vector<float> values;
  values.reserve(rows * cols);
  BatchRows out;
  for (std::size_t i : batch) {
    const auto& m = prepared[i].inputs[layer];
    values.insert(values.end(), m.values.begin(), m.values.end());
    const auto& lab = prepared[i].labels[layer];
    for (std::uint8_t y : lab) {
      (y ? out.abnormal : out.normal).push_back(out.labels.size());
      out.labels.push_back(y);
    }
  }
  out.x = Tensor(Shape{rows, cols}, std::move(values));
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, epoch, kShuffleStream));
  rng.shuffle(order);
  return order;
}

void init_codebooks(Model& model, const std::vector<PreparedImage>& prepared, const std::vector<std::size_t>& order) {
  const std::size_t k = model.config.codebook_size;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    FeatureMatrix samples(0, model.layers[l].channels);
    // Normal positions from the first batches, in batch order, until K rows are available.
    for (std::size_t i : order) {
      const auto& m = prepared[i].inputs[l];
      const auto& lab = prepared[i].labels[l];
      for (std::size_t p = 0; p < m.rows; ++p) {
        if (lab[p]) continue;
        const auto row = m.row(p);
        samples.values.insert(samples.values.end(), row.begin(), row.end());
        ++samples.rows;
      }
      if (samples.rows >= k) break;
    }
    Rng rng(mix_seed(model.config.seed, l, kCodebookStream));
    model.codebooks[l] = init_codebook(k, samples, rng);
  }
}

}  // namespace

TrainResult train(const FeatureDataset& dataset, const RunConfig& config, std::ostream* log) {
  config.validate();
  if (dataset.images.empty()) throw ContractError("training dataset is empty");
  if (std::none_of(dataset.images.begin(), dataset.images.end(), [](const ImageRecord& im) { return im.label == 0; })) {
    throw ContractError("training dataset has no normal image");
  }
  TrainResult result;
  result.references = draw_references(dataset, config.n_fs, config.seed);
  const PoolMap pools = build_pools(dataset, result.references);
  const auto ref_list = flatten_references(result.references);
  const std::set<std::size_t> ref_set(ref_list.begin(), ref_list.end());

  Model model = Model::init(config, dataset.image_height, dataset.image_width, dataset.layers);
  const std::size_t n_layers = dataset.layers.size();

  std::vector<PreparedImage> prepared;
  for (std::size_t i = 0; i < dataset.images.size(); ++i) {
    if (ref_set.count(i)) continue;
    const ImageRecord& im = dataset.images[i];
    const ReferencePool* pool = config.use_residual ? &pools.at(im.class_id) : nullptr;
    PreparedImage p;
    for (std::size_t l = 0; l < n_layers; ++l) {
      const LayerSpec& s = dataset.layers[l];
      p.inputs.push_back(prepare_layer(model, im.features[l], pool, l, false));
      p.labels.push_back(downsample_mask(im.mask, dataset.image_height, dataset.image_width, s.height, s.width));
    }
    prepared.push_back(std::move(p));
  }
  if (prepared.empty()) throw ContractError("every training image is a reference; nothing left to train on");

  init_codebooks(model, prepared, epoch_order(prepared.size(), config.seed, 0));

  std::vector<Tensor> params;
  for (std::size_t l = 0; l < n_layers; ++l) {
    if (config.use_constraintor) {
      for (const auto& t : model.constraintors[l].parameters()) params.push_back(t);
    }
    for (const auto& t : model.flows[l].parameters()) params.push_back(t);
    if (config.use_fdm) params.push_back(model.codebooks[l].embeddings);
  }
  Adam opt(params, AdamOptions{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  const LrSchedule schedule{config.lr, 0.1, config.milestones};
  const HypersphereConfig base_sphere{kRadiusCap, kRadiusRatio * kRadiusCap, config.t, config.lambda};

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    opt.set_lr(schedule.lr_at(epoch));
    const auto order = epoch_order(prepared.size(), config.seed, epoch);
    EpochLosses acc;
    acc.epoch = epoch + 1;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::span<const std::size_t> batch(order.data() + start,
                                               std::min(config.batch_size, order.size() - start));
      Tape tape;
      TapeScope scope(tape);
      Tensor total = Tensor::scalar(0.0f);
      double occ_v = 0.0, ml_v = 0.0, focal_v = 0.0, vq_v = 0.0;
      for (std::size_t l = 0; l < n_layers; ++l) {
        BatchRows rows = stack_layer(prepared, batch, l);
        Tensor xc = rows.x;
        if (config.use_constraintor) {
          auto& cons = model.constraintors[l];
          xc = cons.forward(rows.x, Mode::kTrain);
          Tensor occ = weight_regularizer(cons.weights(), config.lambda);
          if (!rows.normal.empty()) {
            std::vector<double> abn_dist;
            for (std::size_t j : rows.abnormal) {
              abn_dist.push_back(pseudo_huber_dist(rows.x.data().subspan(j * rows.x.cols(), rows.x.cols())));
            }
            const HypersphereConfig sphere = dynamic_radii(abn_dist, base_sphere);
            const Tensor d = pseudo_huber_dist(gather_rows(xc, std::span<const std::size_t>(rows.normal)));
            if (config.use_ai_occ) {
              occ = occ + ai_occ_loss(d, gather_rows(rows.x, std::span<const std::size_t>(rows.abnormal)),
                                      gather_rows(xc, std::span<const std::size_t>(rows.abnormal)), sphere);
            } else {
              occ = occ + bi_occ_loss(d, sphere);
            }
          }
          occ_v += occ.item();
          total = total + occ;
        }
        const FlowOutput<float> out = model.flows[l].forward(config.detach_flow_input ? xc.detach() : xc);
        const Tensor lp_n = log_prob(out.z, out.log_det, Base::kNormal, config.a);
        const Tensor lp_a = log_prob(out.z, out.log_det, Base::kAbnormal, config.a);
        const Tensor ml = ml_loss(lp_n, lp_a, rows.labels);
        const Tensor focal = focal_loss_from_logits(lp_a - lp_n, rows.labels, config.focal_gamma);
        ml_v += ml.item();
        focal_v += focal.item();
        total = total + ml + focal;
        if (config.use_fdm && !rows.normal.empty()) {
          const Tensor vq = vq_loss(gather_rows(rows.x, std::span<const std::size_t>(rows.normal)),
                                    model.codebooks[l].embeddings, config.vq_beta);
          vq_v += vq.item();
          total = total + vq;
        }
      }
      tape.backward(total);
      opt.step();
      opt.zero_grad();
      acc.occ += occ_v;
      acc.ml += ml_v;
      acc.focal += focal_v;
      acc.vq += vq_v;
      acc.total += static_cast<double>(total.item());
      ++n_batches;
    }
    if (n_batches) {
      const double n = static_cast<double>(n_batches);
      acc.occ /= n;
      acc.ml /= n;
      acc.focal /= n;
      acc.vq /= n;
      acc.total /= n;
    }
    result.history.push_back(acc);
    if (log) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "epoch %zu lr=%.3g total=%.6f occ=%.6f ml=%.6f focal=%.6f vq=%.6f\n", acc.epoch,
                    opt.lr(), acc.total, acc.occ, acc.ml, acc.focal, acc.vq);
      *log << buf << std::flush;
    }
  }
  // Checkpoints hold f32; round the running statistics now so a reloaded
  // model evaluates bit-identically to this one.
  for (auto& c : model.constraintors) {
    for (auto& v : c.running_mean) v = static_cast<float>(v);
    for (auto& v : c.running_var) v = static_cast<float>(v);
  }
  result.model = std::move(model);
  return result;
}

// ===========================================================================
// Evaluation

EvalResult evaluate(const Model& model, const FeatureDataset& dataset, const ReferenceMap& refs,
                    std::vector<std::size_t> scored) {
  const RunConfig& cfg = model.config;
  if (dataset.layers != model.layers) throw ValidationError("dataset layers do not match the checkpoint");
  if (dataset.image_height != model.image_height || dataset.image_width != model.image_width) {
    throw ValidationError("dataset image size does not match the checkpoint");
  }
  const auto ref_list = flatten_references(refs);
  const std::set<std::size_t> ref_set(ref_list.begin(), ref_list.end());
  PoolMap pools;
  if (cfg.use_residual) pools = build_pools(dataset, refs);
  if (scored.empty()) {
    for (std::size_t i = 0; i < dataset.images.size(); ++i) {
      if (!ref_set.count(i)) scored.push_back(i);
    }
  } else {
    std::sort(scored.begin(), scored.end());
    if (std::adjacent_find(scored.begin(), scored.end()) != scored.end()) {
      throw ContractError("scored image list has duplicates");
    }
    for (std::size_t i : scored) {
      if (i >= dataset.images.size()) throw ContractError("scored image " + std::to_string(i) + " out of range");
      if (ref_set.count(i)) throw ContractError("reference image " + std::to_string(i) + " cannot be scored");
    }
  }
  if (scored.empty()) throw ContractError("no images left to score");

  EvalResult res;
  res.scored = scored;
  std::vector<double> image_scores, pixel_scores;
  std::vector<std::uint8_t> image_labels, pixel_labels;
  std::vector<std::vector<std::uint8_t>> masks;
  const std::size_t n_layers = model.layers.size();
  // Per image and layer: raw log p_n and classification grids.
  std::vector<std::vector<Grid>> lpn(scored.size()), cls(scored.size());
  std::vector<double> layer_max(n_layers, -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < scored.size(); ++k) {
    const ImageRecord& im = dataset.images[scored[k]];
    const ReferencePool* pool = nullptr;
    if (cfg.use_residual) {
      auto it = pools.find(im.class_id);
      if (it == pools.end()) throw ContractError("no reference images for class " + std::to_string(im.class_id));
      pool = &it->second;
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
      const LayerSpec& s = model.layers[l];
      const FeatureMatrix x = constrain_layer(model, prepare_layer(model, im.features[l], pool, l, cfg.use_fdm), l);
      const FlowOutput<float> out = model.flows[l].forward(to_tensor(x));
      Grid gl(s.height, s.width), gc(s.height, s.width);
      std::vector<double> z(s.channels);
      for (std::size_t p = 0; p < x.rows; ++p) {
        for (std::size_t c = 0; c < s.channels; ++c) z[c] = out.z.at(p, c);
        const double ld = out.log_det.at(p, 0);
        const double lp_n = log_prob(z, ld, Base::kNormal, cfg.a);
        const double lp_a = log_prob(z, ld, Base::kAbnormal, cfg.a);
        gl.values[p] = lp_n;
        gc.values[p] = classification_score(lp_n, lp_a);
        layer_max[l] = std::max(layer_max[l], lp_n);
      }
      lpn[k].push_back(std::move(gl));
      cls[k].push_back(std::move(gc));
    }
  }
  for (std::size_t k = 0; k < scored.size(); ++k) {
    const ImageRecord& im = dataset.images[scored[k]];
    std::vector<Grid> lik, cl;
    for (std::size_t l = 0; l < n_layers; ++l) {
      Grid& g = lpn[k][l];
      const double ref = cfg.normalize_density ? layer_max[l] : 0.0;
      for (auto& v : g.values) v = likelihood_score(v, ref);
      lik.push_back(upsample_bilinear(g, model.image_height, model.image_width));
      cl.push_back(upsample_bilinear(cls[k][l], model.image_height, model.image_width));
    }
    ScoreMap sm = merge_maps(lik, cl, cfg.use_mac);
    image_scores.push_back(sm.image_score);
    image_labels.push_back(im.label);
    pixel_scores.insert(pixel_scores.end(), sm.grid.values.begin(), sm.grid.values.end());
    pixel_labels.insert(pixel_labels.end(), im.mask.begin(), im.mask.end());
    masks.push_back(im.mask);
    res.maps.push_back(std::move(sm));
  }
  std::vector<Grid> grids;
  for (const auto& m : res.maps) grids.push_back(m.grid);
  res.report.image_auroc = auroc(image_scores, image_labels);
  res.report.pixel_auroc = auroc(pixel_scores, pixel_labels);
  res.report.pro_03 = pro_at_fpr(grids, masks);
  return res;
}

// ===========================================================================
// Statistics and manifests

StatsReport decorrelation_stats(const FeatureDataset& dataset, const ReferenceMap& refs, const Model* model) {
  const PoolMap pools = build_pools(dataset, refs);
  DecorrelationInput in;
  in.dataset = &dataset;
  in.pools = &pools;
  in.exclude = flatten_references(refs);
  StatsReport rep;
  in.use_residual = false;
  rep.initial = decorrelation_report(in);
  in.use_residual = true;
  rep.residual = decorrelation_report(in);
  if (model != nullptr) {
    if (dataset.layers != model->layers) throw ValidationError("dataset layers do not match the checkpoint");
    in.transform = [model](std::size_t l, const FeatureMatrix& m) {
      return to_matrix(model->constraintors[l].forward_eval(to_tensor(m)));
    };
    rep.constrained = decorrelation_report(in);
    rep.has_constrained = true;
  }
  return rep;
}

std::string StatsReport::to_text() const {
  std::string out;
  auto emit = [&out](const char* prefix, const DecorrelationStats& s) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%s.kurtosis = %.6f\n%s.abs_normal = %.6f\n%s.abs_abnormal = %.6f\n%s.scale_std = %.6f\n", prefix,
                  s.kurtosis, prefix, s.abs_normal, prefix, s.abs_abnormal, prefix, s.scale_std);
    out += buf;
  };
  emit("initial", initial);
  emit("residual", residual);
  if (has_constrained) emit("constrained", constrained);
  return out;
}

std::string Manifest::to_text() const {
  char buf[64];
  std::string out = "seed = " + std::to_string(seed) + "\n";
  std::snprintf(buf, sizeof buf, "config_hash = %016" PRIx64 "\n", config_hash);
  out += buf;
  for (const auto& [k, idx] : references) {
    out += "references.class_" + std::to_string(k) + " = ";
    for (std::size_t i = 0; i < idx.size(); ++i) out += (i ? "," : "") + std::to_string(idx[i]);
    out += "\n";
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  const std::string text = manifest.to_text();
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace resad
