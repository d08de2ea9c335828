#include "resad/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <sstream>

#include "resad/errors.hpp"
#include "resad/pipeline.hpp"
#include "resad/selfcheck.hpp"

namespace resad {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint32_t parse_u32(const std::string& s, const char* what) {
  std::uint32_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw UsageError(std::string("bad ") + what + " '" + s + "'");
  }
  return v;
}

// "8x8x8,4x4x16" -> layer specs.
std::vector<LayerSpec> parse_layers(const std::string& text) {
  std::vector<LayerSpec> out;
  for (const auto& item : split(text, ',')) {
    const auto dims = split(item, 'x');
    if (dims.size() != 3) throw UsageError("layer '" + item + "' is not HxWxC");
    out.push_back({parse_u32(dims[0], "layer height"), parse_u32(dims[1], "layer width"),
                   parse_u32(dims[2], "layer channels")});
  }
  if (out.empty()) throw UsageError("--layers is empty");
  return out;
}

// Explicit reference indices, grouped by the class of each image.
ReferenceMap parse_refs(const std::string& text, const FeatureDataset& ds) {
  ReferenceMap refs;
  for (const auto& item : split(text, ',')) {
    const std::size_t i = parse_u32(item, "reference index");
    if (i >= ds.images.size()) throw ContractError("reference index " + item + " is out of range");
    refs[ds.images[i].class_id].push_back(i);
  }
  if (refs.empty()) throw UsageError("--refs is empty");
  for (auto& [k, v] : refs) std::sort(v.begin(), v.end());
  return refs;
}

void write_text(const std::string& path, const std::string& text) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Class-agnostic anomaly detection on residual features"};
  app.require_subcommand(1);

  // synth
  SynthSpec synth;
  std::string synth_out, synth_layers = "8x8x8,4x4x16";
  std::uint32_t image_size = 16;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic multi-class feature dataset");
  c_synth->add_option("--out", synth_out, "Output dataset file")->required();
  c_synth->add_option("--classes", synth.n_classes, "Number of classes");
  c_synth->add_option("--first-class", synth.first_class_id, "Id of the first class");
  c_synth->add_option("--images-per-class", synth.images_per_class, "Images per class");
  c_synth->add_option("--anomaly-fraction", synth.anomaly_fraction, "Share of abnormal images per class");
  c_synth->add_option("--image-size", image_size, "Square image side");
  c_synth->add_option("--layers", synth_layers, "Comma list of HxWxC layer shapes");
  c_synth->add_option("--separation", synth.class_separation, "Norm of each class mean");
  c_synth->add_option("--magnitude", synth.anomaly_magnitude, "Norm of the planted perturbation");
  c_synth->add_option("--seed", synth.seed, "Seed");
  c_synth->add_option("--split", synth.split, "Independent sample index (0 train, 1 test, ...)");

  // train
  std::string train_config, train_data, train_out;
  std::vector<std::string> train_set;
  bool quiet = false;
  auto* c_train = app.add_subcommand("train", "Train a model on known classes");
  c_train->add_option("--config", train_config, "key = value config file");
  c_train->add_option("--data", train_data, "Training dataset")->required();
  c_train->add_option("--out", train_out, "Checkpoint path")->required();
  c_train->add_option("--set", train_set, "Config override key=value (repeatable)");
  c_train->add_flag("--quiet", quiet, "Suppress per-epoch loss lines");

  // eval
  std::string eval_ckpt, eval_data, eval_refs, eval_report, eval_maps;
  std::size_t eval_n_refs = 0;
  std::uint64_t eval_seed = 42;
  std::vector<std::string> eval_set;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a (new-class) dataset");
  c_eval->add_option("--ckpt", eval_ckpt, "Checkpoint")->required();
  c_eval->add_option("--data", eval_data, "Test dataset")->required();
  auto* o_refs = c_eval->add_option("--refs", eval_refs, "Comma list of reference image indices");
  auto* o_nrefs = c_eval->add_option("--n-refs", eval_n_refs, "Draw this many normal references per class");
  o_refs->excludes(o_nrefs);
  c_eval->add_option("--seed", eval_seed, "Seed of the reference draw");
  c_eval->add_option("--report", eval_report, "Write the report here instead of stdout");
  c_eval->add_option("--maps", eval_maps, "Write per-image score maps (RSSM)");
  c_eval->add_option("--set", eval_set, "Config override key=value (repeatable)");

  // stats
  std::string stats_data, stats_ckpt, stats_report;
  std::size_t stats_n_refs = 4;
  std::uint64_t stats_seed = 42;
  auto* c_stats = app.add_subcommand("stats", "Decorrelation statistics of initial/residual/constrained features");
  c_stats->add_option("--data", stats_data, "Dataset")->required();
  c_stats->add_option("--ckpt", stats_ckpt, "Checkpoint (adds constrained statistics)");
  c_stats->add_option("--n-refs", stats_n_refs, "Normal references per class");
  c_stats->add_option("--seed", stats_seed, "Seed of the reference draw");
  c_stats->add_option("--report", stats_report, "Write the report here instead of stdout");

  auto* c_verify = app.add_subcommand("verify", "Run the built-in invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (c_synth->parsed()) {
      synth.image_height = synth.image_width = image_size;
      synth.layers = parse_layers(synth_layers);
      const FeatureDataset ds = synth_dataset(synth);
      write_dataset(ds, synth_out);
      out << "wrote " << ds.images.size() << " images to " << synth_out << "\n";
    } else if (c_train->parsed()) {
      RunConfig cfg = train_config.empty() ? RunConfig{} : read_config(train_config);
      for (const auto& s : train_set) apply_override(cfg, s);
      const FeatureDataset ds = read_dataset(train_data);
      const TrainResult res = train(ds, cfg, quiet ? nullptr : &out);
      save_model(res.model, train_out);
      write_manifest(train_out + ".manifest", {cfg.seed, cfg.hash(), res.references});
      out << "saved " << train_out << "\n";
    } else if (c_eval->parsed()) {
      Model model = load_model(eval_ckpt);
      for (const auto& s : eval_set) apply_override(model.config, s);
      const FeatureDataset ds = read_dataset(eval_data);
      ReferenceMap refs;
      if (!eval_refs.empty()) {
        refs = parse_refs(eval_refs, ds);
      } else {
        refs = draw_references(ds, eval_n_refs ? eval_n_refs : model.config.n_fs, eval_seed);
      }
      const EvalResult res = evaluate(model, ds, refs);
      const std::string text = res.report.to_text();
      if (eval_report.empty()) {
        out << text;
      } else {
        write_text(eval_report, text);
        write_manifest(eval_report + ".manifest", {eval_seed, model.config.hash(), refs});
      }
      if (!eval_maps.empty()) write_score_maps(eval_maps, res.maps);
    } else if (c_stats->parsed()) {
      const FeatureDataset ds = read_dataset(stats_data);
      std::optional<Model> model;
      if (!stats_ckpt.empty()) model = load_model(stats_ckpt);
      const ReferenceMap refs = draw_references(ds, stats_n_refs, stats_seed);
      const StatsReport rep = decorrelation_stats(ds, refs, model ? &*model : nullptr);
      if (stats_report.empty()) {
        out << rep.to_text();
      } else {
        write_text(stats_report, rep.to_text());
      }
    } else if (c_verify->parsed()) {
      bool all = true;
      for (const auto& r : run_selfcheck()) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
        all = all && r.passed;
      }
      return all ? 0 : 1;
    }
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace resad
