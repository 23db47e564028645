// cmrlab: motion-artifact synthesis, correction and scoring from the command line.
// Exit codes: 0 success, 1 I/O, 2 configuration/validation, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cmrlab/cmrlab.hpp"

namespace fs = std::filesystem;
using namespace cmrlab;

namespace {

Point2 axis_from_name(const std::string& name) {
  if (name == "x") return {1.0, 0.0};
  if (name == "y") return {0.0, 1.0};
  throw ConfigError("axis must be 'x' or 'y', got '" + name + "'");
}

ImageFormat format_from_name(const std::string& name) {
  if (name == "pgm") return ImageFormat::pgm;
  if (name == "png") return ImageFormat::png;
  throw ConfigError("format must be 'pgm' or 'png', got '" + name + "'");
}

std::string extension(ImageFormat f) { return f == ImageFormat::pgm ? ".pgm" : ".png"; }

struct TrajectoryFlags {
  std::size_t steps = 16;
  double along = 0.6;
  double perp = 0.15;
  double momentum = 0.7;
  double max_step = 1.0;
  std::string axis = "y";

  void add_to(CLI::App* cmd) {
    cmd->add_option("--steps", steps, "Trajectory length (points)")->capture_default_str();
    cmd->add_option("--along", along, "Step std along the drift axis (px)")->capture_default_str();
    cmd->add_option("--perp", perp, "Step std across the drift axis (px)")->capture_default_str();
    cmd->add_option("--momentum", momentum, "Velocity carry-over in [0, 1)")->capture_default_str();
    cmd->add_option("--max-step", max_step, "Largest per-step displacement (px)")->capture_default_str();
    cmd->add_option("--axis", axis, "Drift axis: x or y")->capture_default_str();
  }

  TrajectoryParams params() const {
    TrajectoryParams p;
    p.steps = steps;
    p.step_sigma_along = along;
    p.step_sigma_perp = perp;
    p.momentum = momentum;
    p.max_step = max_step;
    p.drift_axis = axis_from_name(axis);
    p.validate();
    return p;
  }
};

// ---------------------------------------------------------------- synth
struct SynthArgs {
  std::string input_dir;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t count = 1;
  std::size_t kernel_size = 9;
  double sigma = 0.01;
  std::string boundary = "circular";
  std::string format = "pgm";
  TrajectoryFlags trajectory;
};

int run_synth(const SynthArgs& a) {
  SynthOptions opt;
  opt.trajectory = a.trajectory.params();
  opt.kernel_size = a.kernel_size;
  opt.noise_sigma = a.sigma;
  opt.count_per_image = a.count;
  opt.base_seed = a.seed;
  if (a.boundary == "circular") {
    opt.boundary = Boundary::circular;
  } else if (a.boundary == "replicate") {
    opt.boundary = Boundary::replicate;
  } else {
    throw ConfigError("boundary must be 'circular' or 'replicate'");
  }
  opt.output_format = format_from_name(a.format);
  const SynthResult r = synth_dataset(a.input_dir, a.out_dir, opt);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "pairs written: " << r.records.size() << "\nseed: " << a.seed
            << "\nmanifest: " << r.manifest_path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- phantoms
struct PhantomArgs {
  std::string out_dir;
  std::size_t count = 10;
  std::uint64_t seed = 0;
  std::size_t size = 64;
  std::string kind = "shapes";
  std::string format = "pgm";
};

int run_phantoms(const PhantomArgs& a) {
  const ImageFormat fmt = format_from_name(a.format);
  if (a.kind != "shapes" && a.kind != "disk-ring" && a.kind != "disk" && a.kind != "ring") {
    throw ConfigError("kind must be shapes, disk-ring, disk or ring");
  }
  fs::create_directories(a.out_dir);
  for (std::size_t i = 0; i < a.count; ++i) {
    const std::uint64_t s = a.seed + i;
    Image img = a.kind == "shapes"      ? shapes_phantom(s, a.size)
                : a.kind == "disk-ring" ? disk_ring_phantom(s, a.size)
                : a.kind == "disk"      ? disk_phantom(a.size)
                                        : ring_phantom(a.size);
    char name[32];
    std::snprintf(name, sizeof name, "phantom_%04zu", i);
    write_image(fs::path(a.out_dir) / (name + extension(fmt)), img);
  }
  std::cout << "phantoms written: " << a.count << "\nseed: " << a.seed << "\n";
  return 0;
}

// ---------------------------------------------------------------- kspace-sim
struct KspaceArgs {
  std::string input;
  std::string output;
  std::size_t cycles = 8;
  double max_shift = 4.0;
  std::uint64_t seed = 0;
  std::string axis = "y";
};

int run_kspace(const KspaceArgs& a) {
  const Image img = read_image(a.input);
  const Point2 ax = axis_from_name(a.axis);
  const AcquisitionSchedule s = make_interleaved_schedule(img.height(), a.cycles, a.max_shift, a.seed, {ax.x, ax.y});
  const Image out = simulate_segmented_acquisition(img, s);
  write_image(a.output, out);
  std::cout << "cycles: " << a.cycles << "\nseed: " << a.seed << "\n";
  for (std::size_t n = 0; n < s.displacements.size(); ++n) {
    std::cout << "cycle " << n << " shift " << s.displacements[n].dx + 0.0 << " " << s.displacements[n].dy + 0.0 << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- train
struct TrainArgs {
  std::string manifest;
  std::string out;
  std::string history;
  std::size_t epochs_const = 1;
  std::size_t epochs_decay = 0;
  double lr = 1e-4;
  std::size_t batch = 4;
  std::size_t resblocks = 2;
  std::size_t base_channels = 16;
  double lambda_gan = 100.0;
  double lambda_edge = 100.0;
  std::uint64_t seed = 0;
  bool no_skip = false;
  bool augment = false;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.epochs_constant = a.epochs_const;
  cfg.epochs_decay = a.epochs_decay;
  cfg.lr0 = a.lr;
  cfg.batch = a.batch;
  cfg.seed = a.seed;
  cfg.weights = {a.lambda_gan, a.lambda_edge};
  cfg.generator.n_resblocks = a.resblocks;
  cfg.generator.base_channels = a.base_channels;
  cfg.generator.global_skip = !a.no_skip;
  cfg.discriminator.base_channels = a.base_channels;
  cfg.augment = a.augment;
  cfg.validate();
  const RunManifest manifest = load_manifest(a.manifest);
  if (manifest.records.empty()) throw ConfigError("manifest has no records");
  const auto pairs = load_training_pairs(manifest);
  const std::size_t per_epoch = steps_per_epoch(pairs.size(), cfg.batch);
  std::printf("train: pairs=%zu steps_per_epoch=%zu epochs_const=%zu epochs_decay=%zu\n", pairs.size(), per_epoch,
              cfg.epochs_constant, cfg.epochs_decay);
  std::printf("lambda_gan=%g lambda_edge=%g lr=%g batch=%zu base_channels=%zu resblocks=%zu global_skip=%s seed=%llu\n",
              cfg.weights.lambda_gan, cfg.weights.lambda_edge, cfg.lr0, cfg.batch, cfg.generator.base_channels,
              cfg.generator.n_resblocks, cfg.generator.global_skip ? "on" : "off",
              static_cast<unsigned long long>(cfg.seed));
  std::fflush(stdout);
  const bool quiet = a.quiet;
  const TrainResult r = train(pairs, cfg, [per_epoch, quiet](const LossRecord& rec) {
    if (quiet || (rec.step + 1) % per_epoch != 0) return;
    std::printf("step %zu lr=%.3g content=%.6f edge=%.6f gan_g=%.6f d_loss=%.6f\n", rec.step + 1, rec.lr, rec.content,
                rec.edge, rec.gan_g, rec.d_loss);
    std::fflush(stdout);
  });
  save_checkpoint(a.out, r.checkpoint);
  const std::string history = a.history.empty() ? a.out + ".history.csv" : a.history;
  write_file_atomic(history, format_loss_history(r.history));
  std::cout << "checkpoint: " << a.out << "\nhistory: " << history << "\nsteps: " << r.checkpoint.step << "\n";
  return 0;
}

// ---------------------------------------------------------------- correct
struct CorrectArgs {
  std::string manifest;
  std::string input;
  std::string output;
  std::string method = "cmcn";
  std::string model;
  std::string psf;
  std::size_t iters = 30;
  std::size_t kernel_size = 9;
  std::string out_dir;
  std::string format = "pgm";
  TrajectoryFlags trajectory;
};

int run_correct(const CorrectArgs& a) {
  if (a.method != "cmcn" && a.method != "rl") throw ConfigError("method must be 'cmcn' or 'rl'");
  if (a.manifest.empty() == a.input.empty()) throw ConfigError("give exactly one of --manifest or --input");
  std::optional<Checkpoint> ckpt;
  std::optional<PSF> fixed_psf;
  if (a.method == "cmcn") {
    if (a.model.empty()) throw ConfigError("--method cmcn needs --model");
    ckpt = load_checkpoint(a.model);
  } else if (!a.psf.empty()) {
    fixed_psf = read_psf(a.psf);
  }
  const RLConfig rl{a.iters, 1e-12};
  // Without --psf, each pair's PSF is regenerated from its manifest seed.
  auto psf_for = [&](std::uint64_t seed) {
    return fixed_psf ? *fixed_psf : pair_psf(a.trajectory.params(), a.kernel_size, seed);
  };
  auto restore = [&](const Image& img, std::uint64_t seed) {
    if (ckpt) return correct(img, *ckpt);
    return richardson_lucy(img, psf_for(seed), rl);
  };

  if (!a.input.empty()) {
    if (a.output.empty()) throw ConfigError("--input needs --output");
    if (a.method == "rl" && !fixed_psf) throw ConfigError("--input with --method rl needs --psf");
    write_image(a.output, restore(read_image(a.input), 0));
    std::cout << "restored: " << a.output << "\n";
    return 0;
  }

  const RunManifest manifest = load_manifest(a.manifest);
  const fs::path out_dir = a.out_dir.empty() ? manifest.directory / "restored" : fs::path(a.out_dir);
  fs::create_directories(out_dir);
  const ImageFormat fmt = format_from_name(a.format);
  std::vector<ManifestRecord> out(manifest.records.size());
  parallel_for(manifest.records.size(), [&](std::size_t i) {
    const auto& rec = manifest.records[i];
    const Image restored = restore(read_image(manifest.resolve(rec.blur_path)), rec.seed);
    char name[32];
    std::snprintf(name, sizeof name, "restored_%06zu", i);
    const fs::path path = out_dir / (name + extension(fmt));
    write_image(path, restored);
    ManifestRecord r = rec;
    r.sharp_path = fs::relative(manifest.resolve(rec.sharp_path), out_dir).generic_string();
    r.blur_path = fs::relative(manifest.resolve(rec.blur_path), out_dir).generic_string();
    r.restored_path = path.filename().generic_string();
    out[i] = std::move(r);
  });
  const fs::path out_manifest = out_dir / "manifest.jsonl";
  save_manifest(out_manifest, out);
  std::cout << "restored: " << out.size() << "\nmanifest: " << out_manifest.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- eval
struct EvalArgs {
  std::string manifest;
  std::string out;
  double edge_fraction = 0.25;
  bool blurred = false;
};

int run_eval(const EvalArgs& a) {
  EvalOptions opt;
  opt.edge_fraction = a.edge_fraction;
  opt.subject = a.blurred ? EvalSubject::blurred : EvalSubject::restored;
  if (!(opt.edge_fraction > 0.0 && opt.edge_fraction <= 1.0)) throw ConfigError("--edge-fraction must be in (0, 1]");
  const EvalReport report = evaluate_report(load_manifest(a.manifest), opt);
  for (const auto& e : report.row_errors) std::cerr << "row error: " << e << "\n";
  if (!a.out.empty()) write_file_atomic(a.out, format_report_csv(report));
  std::cout << format_report_text(report);
  return 0;
}

// ---------------------------------------------------------------- psf
struct PsfArgs {
  std::uint64_t seed = 0;
  std::size_t kernel_size = 9;
  std::string out;
  TrajectoryFlags trajectory;
};

int run_psf(const PsfArgs& a) {
  const PSF psf = pair_psf(a.trajectory.params(), a.kernel_size, a.seed);
  if (a.out.empty()) {
    std::cout << format_psf(psf);
  } else {
    write_psf(a.out, psf);
  }
  return 0;
}

// ---------------------------------------------------------------- gradcheck
struct GradcheckArgs {
  std::size_t seeds = 5;
  bool corrupt = false;
};

int run_gradcheck(const GradcheckArgs& a) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t s = 1; s <= a.seeds; ++s) seeds.push_back(s);
  GradCheckOptions opt;
  if (a.corrupt) opt.corrupt_factor = 0.1;
  bool ok = true;
  std::printf("%-26s %14s %12s  %s\n", "layer", "max_rel_error", "coordinates", "result");
  for (const auto& r : run_gradcheck_suite(seeds, opt)) {
    std::printf("%-26s %14.3e %12zu  %s\n", r.name.c_str(), r.max_rel_error, r.coordinates,
                r.passed ? "pass" : "FAIL");
    ok = ok && r.passed;
  }
  std::printf("gradcheck %s (tolerance %.0e, h = %.0e, %zu seeds)\n", ok ? "passed" : "FAILED", kGradCheckTolerance,
              opt.h, seeds.size());
  return ok ? 0 : static_cast<int>(ErrorCode::numeric);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cardiac MR motion-artifact toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Blur every image in a directory and write a manifest");
  c_synth->add_option("--input-dir", synth.input_dir, "Directory of sharp PGM/PNG images")->required();
  c_synth->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  c_synth->add_option("--seed", synth.seed, "Base seed")->capture_default_str();
  c_synth->add_option("--count", synth.count, "Blurred copies per image")->capture_default_str();
  c_synth->add_option("--kernel-size", synth.kernel_size, "Odd PSF size")->capture_default_str();
  c_synth->add_option("--sigma", synth.sigma, "Noise standard deviation")->capture_default_str();
  c_synth->add_option("--boundary", synth.boundary, "circular or replicate")->capture_default_str();
  c_synth->add_option("--format", synth.format, "pgm or png")->capture_default_str();
  synth.trajectory.add_to(c_synth);

  PhantomArgs phantoms;
  auto* c_ph = app.add_subcommand("phantoms", "Write synthetic test images");
  c_ph->add_option("--out-dir", phantoms.out_dir, "Output directory")->required();
  c_ph->add_option("--count", phantoms.count, "Number of images")->capture_default_str();
  c_ph->add_option("--seed", phantoms.seed, "First seed")->capture_default_str();
  c_ph->add_option("--size", phantoms.size, "Image side (px)")->capture_default_str();
  c_ph->add_option("--kind", phantoms.kind, "shapes, disk-ring, disk or ring")->capture_default_str();
  c_ph->add_option("--format", phantoms.format, "pgm or png")->capture_default_str();

  KspaceArgs kspace;
  auto* c_ks = app.add_subcommand("kspace-sim", "Simulate a segmented acquisition with per-cycle motion");
  c_ks->add_option("--input", kspace.input, "Input image")->required();
  c_ks->add_option("--output", kspace.output, "Output image")->required();
  c_ks->add_option("--cycles", kspace.cycles, "Number of cardiac cycles N")->capture_default_str();
  c_ks->add_option("--max-shift", kspace.max_shift, "Largest per-cycle shift (px)")->capture_default_str();
  c_ks->add_option("--seed", kspace.seed, "Seed")->capture_default_str();
  c_ks->add_option("--axis", kspace.axis, "Motion axis: x or y")->capture_default_str();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train the correction network");
  c_tr->add_option("--manifest", tr.manifest, "Training manifest")->required();
  c_tr->add_option("--out", tr.out, "Checkpoint path")->required();
  c_tr->add_option("--history", tr.history, "Loss history CSV (default <out>.history.csv)");
  c_tr->add_option("--epochs-const", tr.epochs_const, "Epochs at the initial rate")->capture_default_str();
  c_tr->add_option("--epochs-decay", tr.epochs_decay, "Epochs of linear decay to 0")->capture_default_str();
  c_tr->add_option("--lr", tr.lr, "Initial learning rate")->capture_default_str();
  c_tr->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
  c_tr->add_option("--resblocks", tr.resblocks, "Residual blocks")->capture_default_str();
  c_tr->add_option("--base-channels", tr.base_channels, "Base channel count")->capture_default_str();
  c_tr->add_option("--lambda-gan", tr.lambda_gan, "Adversarial weight")->capture_default_str();
  c_tr->add_option("--lambda-edge", tr.lambda_edge, "Edge weight")->capture_default_str();
  c_tr->add_option("--seed", tr.seed, "Seed")->capture_default_str();
  c_tr->add_flag("--no-skip", tr.no_skip, "Disable the global input-to-output skip");
  c_tr->add_flag("--augment", tr.augment, "Random rigid augmentation of training pairs");
  c_tr->add_flag("--quiet", tr.quiet, "Only print the header and summary");

  CorrectArgs co;
  auto* c_co = app.add_subcommand("correct", "Restore blurred images");
  c_co->add_option("--manifest", co.manifest, "Manifest of pairs to restore");
  c_co->add_option("--input", co.input, "Single image to restore");
  c_co->add_option("--output", co.output, "Output for --input");
  c_co->add_option("--method", co.method, "cmcn or rl")->capture_default_str();
  c_co->add_option("--model", co.model, "Checkpoint for --method cmcn");
  c_co->add_option("--psf", co.psf, "PSF file for --method rl (default: regenerate from each pair's seed)");
  c_co->add_option("--iters", co.iters, "Richardson-Lucy iterations")->capture_default_str();
  c_co->add_option("--kernel-size", co.kernel_size, "PSF size when regenerating")->capture_default_str();
  c_co->add_option("--out-dir", co.out_dir, "Output directory (default <manifest dir>/restored)");
  c_co->add_option("--format", co.format, "pgm or png")->capture_default_str();
  co.trajectory.add_to(c_co);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Score restored images against their sharp targets");
  c_ev->add_option("--manifest", ev.manifest, "Manifest with restored_path entries")->required();
  c_ev->add_option("--out", ev.out, "CSV report path");
  c_ev->add_option("--edge-fraction", ev.edge_fraction, "Edge threshold fraction")->capture_default_str();
  c_ev->add_flag("--blurred", ev.blurred, "Score the blurred inputs instead of restored outputs");

  PsfArgs ps;
  auto* c_ps = app.add_subcommand("psf", "Print or write the PSF of a pair seed");
  c_ps->add_option("--seed", ps.seed, "Pair seed")->capture_default_str();
  c_ps->add_option("--kernel-size", ps.kernel_size, "Odd PSF size")->capture_default_str();
  c_ps->add_option("--out", ps.out, "Output file (default stdout)");
  ps.trajectory.add_to(c_ps);

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference check of every layer's gradient");
  c_gc->add_option("--seeds", gc.seeds, "Number of random seeds")->capture_default_str();
  c_gc->add_flag("--corrupt", gc.corrupt, "Debug: scale analytic gradients by 1.1 (must fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorCode::config);
  }

  try {
    if (*c_synth) return run_synth(synth);
    if (*c_ph) return run_phantoms(phantoms);
    if (*c_ks) return run_kspace(kspace);
    if (*c_tr) return run_train(tr);
    if (*c_co) return run_correct(co);
    if (*c_ev) return run_eval(ev);
    if (*c_ps) return run_psf(ps);
    if (*c_gc) return run_gradcheck(gc);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorCode::io);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorCode::io);
  }
  return static_cast<int>(ErrorCode::config);
}
