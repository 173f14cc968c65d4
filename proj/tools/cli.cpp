#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "unisae/binary_io.hpp"
#include "unisae/config.hpp"
#include "unisae/error.hpp"
#include "unisae/interpret.hpp"
#include "unisae/metrics.hpp"
#include "unisae/parallel.hpp"
#include "unisae/sae_io.hpp"
#include "unisae/store.hpp"
#include "unisae/synthetic.hpp"
#include "unisae/trainer.hpp"

namespace fs = std::filesystem;

namespace unisae::cli {

namespace {

constexpr const char* kDataFile = "data.lact";

// A directory argument means the dataset written by gen-synth inside it.
std::string resolve_data(const std::string& path) {
  if (fs::is_directory(path)) return (fs::path(path) / kDataFile).string();
  return path;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError(FormatErrorKind::kIo, "cannot create directory " + dir + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

GridShape dataset_grid(const std::string& data_path) {
  const DatasetManifest m = read_manifest(data_path);
  return {m.grid_h, m.grid_w};
}

std::string csv_row(std::initializer_list<std::string> cells) {
  std::string s;
  for (const auto& c : cells) {
    if (!s.empty()) s += ',';
    s += c;
  }
  return s + "\n";
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  int threads = 0;

  int thread_count() const { return threads > 0 ? threads : default_thread_count(); }
};

int cmd_gen_synth(Context& ctx, const std::string& config_path, const std::string& out_dir,
                  std::size_t terms_per_family) {
  const SyntheticConfig cfg =
      config_path.empty() ? SyntheticConfig{} : load_synthetic_config(config_path);
  cfg.validate();
  auto [samples, truth] = generate_synthetic(cfg);
  ensure_dir(out_dir);
  const std::string data = join(out_dir, kDataFile);
  write_activation_file(data, samples, {cfg.grid_h, cfg.grid_w});
  write_ground_truth(join(out_dir, "ground_truth.json"), cfg, truth);
  write_concept_library(join(out_dir, "concepts.json"), make_concept_library(cfg, truth, terms_per_family));
  binary::write_text_file(join(out_dir, "synth.cfg"), format_synthetic_config(cfg));
  ctx.out << "wrote " << samples.size() << " samples to " << data << "\n";
  return 0;
}

void write_history(const std::string& path, const Checkpoint& ckpt) {
  std::string s = "step,self_v,self_t,align,cross,total\n";
  for (std::size_t i = 0; i < ckpt.history.size(); ++i) {
    const LossBreakdown& l = ckpt.history[i];
    s += csv_row({std::to_string(i + 1), format_double(l.self_v), format_double(l.self_t),
                  format_double(l.align), format_double(l.cross), format_double(l.total)});
  }
  binary::write_text_file(path, s);
}

int cmd_train(Context& ctx, const std::string& config_path, const std::string& data_path,
              const std::string& out_path, const std::string& resume, const std::string& history,
              std::size_t log_every) {
  const auto dataset = read_activation_file(resolve_data(data_path));
  Checkpoint ckpt;
  if (!resume.empty()) {
    ckpt = load_checkpoint(resume);
    if (!config_path.empty()) {
      const TrainConfig cfg = load_train_config(config_path);
      if (!(cfg.model == ckpt.config.model))
        throw DimensionError("config model shape differs from the resumed checkpoint");
      // Only the step budget may change when resuming.
      ckpt.config.steps = cfg.steps;
    }
  } else {
    if (config_path.empty()) throw InvalidArgument("train needs --config or --resume");
    const TrainConfig cfg = load_train_config(config_path);
    check_dataset_dims(cfg.model, dataset);
    ckpt = init_checkpoint(cfg, dataset);
  }
  check_dataset_dims(ckpt.config.model, dataset);
  const std::uint64_t target = ckpt.config.steps;
  if (ckpt.step < target) {
    StepCallback log;
    if (log_every > 0)
      log = [&](const Checkpoint& c) {
        if (c.step % log_every == 0 || c.step == target)
          ctx.err << "step " << c.step << " loss " << format_double(c.history.back().total) << "\n";
      };
    train_steps(ckpt, dataset, target - ckpt.step, ctx.thread_count(), log);
  }
  save_checkpoint(out_path, ckpt);
  if (!history.empty()) write_history(history, ckpt);
  ctx.out << "trained to step " << ckpt.step;
  if (!ckpt.history.empty()) ctx.out << ", final loss " << format_double(ckpt.history.back().total);
  ctx.out << "\n";
  // Dead latents are reported, never resampled.
  auto dead = [&](Modality m) {
    const Matrix codes = stacked_shared_codes(ckpt.config.model, ckpt.params, dataset, m, ctx.thread_count());
    std::size_t n = 0;
    for (std::size_t c = 0; c < codes.cols(); ++c) {
      bool active = false;
      for (std::size_t r = 0; r < codes.rows() && !active; ++r) active = codes(r, c) > 0.0;
      n += !active;
    }
    return n;
  };
  ctx.out << "dead shared latents: vision " << dead(Modality::kVision) << ", text "
          << dead(Modality::kText) << " of " << ckpt.config.model.vision.n_shared << "\n";
  return 0;
}

std::string r2_csv(const R2Report& r) {
  std::string s = "kind,subject,path,value\n";
  auto self_rows = [&](const char* who, const SelfR2& x) {
    s += csv_row({"self", who, "shared", format_double(x.shared)});
    s += csv_row({"self", who, "private", format_double(x.priv)});
    s += csv_row({"self", who, "joint", format_double(x.joint)});
    s += csv_row({"self", who, "global", x.global ? format_double(*x.global) : std::string("NA")});
  };
  self_rows("vision", r.vision);
  self_rows("text", r.text);
  s += csv_row({"cross", "t_to_v", "shared", format_double(r.t_to_v.shared)});
  s += csv_row({"cross", "t_to_v", "joint", format_double(r.t_to_v.joint)});
  s += csv_row({"cross", "v_to_t", "shared", format_double(r.v_to_t.shared)});
  s += csv_row({"cross", "v_to_t", "joint", format_double(r.v_to_t.joint)});
  s += csv_row({"delta_leak", "vision", "joint_minus_shared", format_double(r.delta_leak_v)});
  s += csv_row({"delta_leak", "text", "joint_minus_shared", format_double(r.delta_leak_t)});
  return s;
}

int cmd_eval(Context& ctx, const std::string& ckpt_path, const std::string& data_path,
             const std::string& out_dir) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const std::string data = resolve_data(data_path);
  const auto dataset = read_activation_file(data);
  check_dataset_dims(ckpt.config.model, dataset);
  const EvalReport rep = evaluate(ckpt, dataset, dataset_grid(data), ctx.thread_count());
  ensure_dir(out_dir);
  binary::write_text_file(join(out_dir, "r2.csv"), r2_csv(rep.r2));
  const GroundingScores& g = rep.grounding.mean;
  binary::write_text_file(join(out_dir, "grounding.csv"),
                          "n_samples,mass_at_obj,point_at_1,iou_at_10\n" +
                              csv_row({std::to_string(rep.grounding.n_samples),
                                       format_double(g.mass_at_obj), format_double(g.point_at_1),
                                       format_double(g.iou_at_10)}));
  binary::write_text_file(join(out_dir, "maxfreq.csv"),
                          "direction,maxfreq\n" + csv_row({"t2i", format_double(rep.maxfreq_t2i)}) +
                              csv_row({"i2t", format_double(rep.maxfreq_i2t)}));
  ctx.out << "self R2 joint v/t: " << format_double(rep.r2.vision.joint) << " "
          << format_double(rep.r2.text.joint) << "\n";
  return 0;
}

int cmd_interpret(Context& ctx, const std::string& ckpt_path, const std::string& data_path,
                  const std::string& concepts_path, const std::string& out_path,
                  const ClusterConfig& cfg) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto dataset = read_activation_file(resolve_data(data_path));
  check_dataset_dims(ckpt.config.model, dataset);
  const ConceptLibrary library = read_concept_library(concepts_path);
  const InterpretResult res = interpret(ckpt, dataset, library, cfg, ctx.thread_count());
  binary::write_text_file(out_path, reports_to_json(res, cfg));
  ctx.out << reports_to_table(res.reports);
  return 0;
}

// Each grid cell becomes a `scale` x `scale` block; mass maps to green
// relative to the peak cell, box outlines are drawn in red.
std::vector<std::uint8_t> render_ppm(const Heatmap& hm, const std::vector<Box>& boxes,
                                     std::size_t scale) {
  const std::size_t w = hm.shape.width * scale, h = hm.shape.height * scale;
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> px(header.begin(), header.end());
  const std::size_t base = px.size();
  px.resize(base + w * h * 3, 0);
  double peak = 0.0;
  for (double x : hm.grid.flat()) peak = std::max(peak, x);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double v = peak > 0.0 ? hm.grid(y / scale, x / scale) / peak : 0.0;
      px[base + (y * w + x) * 3 + 1] = static_cast<std::uint8_t>(std::lround(255.0 * v));
    }
  auto set_red = [&](std::size_t x, std::size_t y) {
    if (x >= w || y >= h) return;
    auto* p = &px[base + (y * w + x) * 3];
    p[0] = 255;
    p[1] = 0;
    p[2] = 0;
  };
  for (const Box& b : boxes) {
    const auto to_px = [](double t, std::size_t n) {
      return std::min(n - 1, static_cast<std::size_t>(std::lround(t * static_cast<double>(n))));
    };
    const std::size_t x0 = to_px(b.x0, w), x1 = to_px(b.x1, w), y0 = to_px(b.y0, h), y1 = to_px(b.y1, h);
    for (std::size_t x = x0; x <= x1; ++x) {
      set_red(x, y0);
      set_red(x, y1);
    }
    for (std::size_t y = y0; y <= y1; ++y) {
      set_red(x0, y);
      set_red(x1, y);
    }
  }
  return px;
}

int cmd_heatmap(Context& ctx, const std::string& ckpt_path, const std::string& data_path,
                const std::vector<std::string>& ids, const std::string& out_dir, std::size_t scale) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const std::string data = resolve_data(data_path);
  const auto dataset = read_activation_file(data);
  check_dataset_dims(ckpt.config.model, dataset);
  const GridShape grid = dataset_grid(data);
  ensure_dir(out_dir);
  for (const std::string& id : ids) {
    const auto it = std::find_if(dataset.begin(), dataset.end(),
                                 [&](const PairedSample& s) { return s.id == id; });
    if (it == dataset.end()) throw InvalidArgument("no sample with id '" + id + "'");
    const Heatmap hm = sample_heatmap(ckpt.config.model, ckpt.params, *it, grid, ckpt.config.guidance,
                                      ckpt.config.sinkhorn_options());
    std::string csv;
    for (std::size_t r = 0; r < hm.grid.rows(); ++r) {
      for (std::size_t c = 0; c < hm.grid.cols(); ++c)
        csv += (c ? "," : "") + format_double(hm.grid(r, c));
      csv += "\n";
    }
    binary::write_text_file(join(out_dir, id + ".csv"), csv);
    binary::write_file(join(out_dir, id + ".ppm"), render_ppm(hm, it->boxes, scale));
    if (!it->boxes.empty()) {
      const GroundingScores g = grounding_scores(hm, it->boxes);
      ctx.out << id << ": mass@obj " << format_double(g.mass_at_obj) << " point@1 "
              << format_double(g.point_at_1) << " IoU@10 " << format_double(g.iou_at_10) << "\n";
    } else {
      ctx.out << id << ": no boxes\n";
    }
  }
  return 0;
}

void describe_config(std::ostream& o, const TrainConfig& c) {
  std::istringstream in(format_train_config(c));
  std::string line;
  while (std::getline(in, line)) o << "  " << line << "\n";
}

int cmd_inspect(Context& ctx, const std::string& path) {
  const auto bytes = binary::read_file(path);
  const std::string magic(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(4, bytes.size())));
  std::ostream& o = ctx.out;
  if (magic == "LACT") {
    const auto samples = read_activation_file(path);
    const DatasetManifest m = read_manifest(path);
    std::size_t valid_t = 0, boxes = 0;
    for (const auto& s : samples) {
      valid_t += s.text.num_valid();
      boxes += s.boxes.size();
    }
    o << "activation file, " << samples.size() << " samples\n"
      << "  vision: " << samples.front().vision.num_tokens() << " x " << m.d << " (grid " << m.grid_h
      << "x" << m.grid_w << ")\n"
      << "  text: " << samples.front().text.num_tokens() << " x " << m.d_text << ", mean valid "
      << format_double(static_cast<double>(valid_t) / static_cast<double>(samples.size())) << "\n"
      << "  boxes: " << boxes << "\n";
  } else if (magic == "LCKP") {
    const Checkpoint c = load_checkpoint(path);
    o << "checkpoint at step " << c.step << ", " << c.params.num_values() << " parameters\n";
    describe_config(o, c.config);
    if (!c.history.empty()) {
      const LossBreakdown& l = c.history.back();
      o << "  last loss: total " << format_double(l.total) << " self_v " << format_double(l.self_v)
        << " self_t " << format_double(l.self_t) << " align " << format_double(l.align) << " cross "
        << format_double(l.cross) << "\n";
    }
  } else if (magic == "LSAE") {
    const auto [cfg, params] = load_sae(path);
    o << "sae: d " << cfg.d << ", shared " << cfg.n_shared << " (k " << cfg.k_shared << "), private "
      << cfg.n_private << " (k " << cfg.k_private << ")\n";
  } else if (!bytes.empty() && bytes.front() == '{') {
    const ConceptLibrary lib = read_concept_library(path);
    o << "concept library, " << lib.entries.size() << " entries\n";
    for (const auto& e : lib.entries)
      o << "  " << e.term << ": " << e.text_activations.num_valid() << " tokens\n";
  } else {
    throw FormatError(FormatErrorKind::kBadMagic, "bad magic: unrecognized file " + path);
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shared/private sparse dictionaries over paired activations", "unisae"};
  app.require_subcommand(1);
  Context ctx{out, err};
  app.add_option("--threads", ctx.threads, "Worker threads (default: LUCID_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  app.fallthrough();

  std::string config, data, out_path, ckpt, concepts, resume, history;
  std::vector<std::string> ids;
  std::size_t terms = 3, log_every = 0, scale = 16;
  ClusterConfig cluster;
  double peak_conf = 0.0;

  auto* gen = app.add_subcommand("gen-synth", "Generate a planted-dictionary dataset");
  gen->add_option("--config", config, "Synthetic config (key = value)")->check(CLI::ExistingFile);
  gen->add_option("--out", out_path, "Output directory")->required();
  gen->add_option("--terms-per-family", terms, "Concept terms per planted atom")
      ->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train the paired SAEs");
  train->add_option("--config", config, "Training config (key = value)")->check(CLI::ExistingFile);
  train->add_option("--data", data, "Activation file or gen-synth directory")->required();
  train->add_option("--out", out_path, "Checkpoint to write")->required();
  train->add_option("--resume", resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  train->add_option("--history", history, "Write per-step loss CSV here");
  train->add_option("--log-every", log_every, "Print loss every N steps to stderr");

  auto* eval = app.add_subcommand("eval", "Write R2, grounding and maxfreq CSVs");
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "Activation file or gen-synth directory")->required();
  eval->add_option("--out", out_path, "Output directory")->required();

  auto* interp = app.add_subcommand("interpret", "Associate concepts with shared neurons");
  interp->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  interp->add_option("--data", data, "Activation file or gen-synth directory")->required();
  interp->add_option("--concepts", concepts, "Concept library JSON")->required()->check(CLI::ExistingFile);
  interp->add_option("--out", out_path, "Report JSON to write")->required();
  interp->add_option("--sigma", cluster.sigma, "Cluster cosine threshold");
  interp->add_option("--purity", cluster.purity_threshold, "Purity threshold");
  interp->add_option("--min-hits", cluster.min_hits, "Minimum hits per neuron");
  auto* peak_opt = interp->add_option("--peak-confidence", peak_conf,
                                      "Hit threshold (default: 75th percentile of peaks)");

  auto* heat = app.add_subcommand("heatmap", "Export per-sample transport heatmaps");
  heat->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  heat->add_option("--data", data, "Activation file or gen-synth directory")->required();
  heat->add_option("--sample", ids, "Sample id (repeatable)")->required();
  heat->add_option("--out", out_path, "Output directory")->required();
  heat->add_option("--scale", scale, "Pixels per grid cell")->check(CLI::Range(1, 256));

  auto* inspect = app.add_subcommand("inspect", "Summarize a dataset, checkpoint or concept file");
  inspect->add_option("file", data, "File to inspect")->required();

  if (args.empty()) {
    err << app.help();
    return 1;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_synth(ctx, config, out_path, terms);
    if (*train) return cmd_train(ctx, config, data, out_path, resume, history, log_every);
    if (*eval) return cmd_eval(ctx, ckpt, data, out_path);
    if (*interp) {
      if (*peak_opt) cluster.peak_confidence = peak_conf;
      return cmd_interpret(ctx, ckpt, data, concepts, out_path, cluster);
    }
    if (*heat) return cmd_heatmap(ctx, ckpt, data, ids, out_path, scale);
    if (*inspect) return cmd_inspect(ctx, data);
  } catch (const UserError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    err << "internal error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace unisae::cli
