// SPDX-License-Identifier: Apache-2.0
//
// mavfi: command-line front end.
//
//   mavfi make-dataset --out DIR --count N [--seed S] [--config FILE] [--force]
//   mavfi train        --config FILE --data DIR --out DIR [--resume CKPT] [--seed S]
//   mavfi interpolate  --ckpt CKPT --frame0 A --frame1 B --factor {2,4,6} --out DIR
//   mavfi eval         --ckpt CKPT --data DIR --report FILE [--dump DIR]
//   mavfi ablate       --config FILE --data DIR --seeds 1,2,3 --report FILE [--max-depth 5]
//
// Exit status: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mavfi/mavfi.hpp"

namespace fs = std::filesystem;
using namespace mavfi;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Data-side failure raised by the commands themselves.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

bool non_empty_dir(const fs::path& p) { return fs::exists(p) && (!fs::is_directory(p) || !fs::is_empty(p)); }

std::vector<Triplet<float>> load_data(const fs::path& dir) {
  auto res = ingest_triplet_dir(dir);
  for (const auto& issue : res.issues) std::cerr << "warning: skipping " << issue.sample << ": " << issue.message << "\n";
  if (res.triplets.empty()) throw DataError("no usable triplets in " + dir.string());
  return res.triplets;
}

struct LoadedModel {
  ModelConfig cfg;
  ParameterStore<float> params;
  std::string fingerprint;
};

LoadedModel load_model(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path.string());
  const auto ck = io::read_checkpoint<float>(path);
  LoadedModel m;
  m.cfg = checkpoint_model_config(ck);
  m.params = restore_params(ck, m.cfg);
  m.fingerprint = ck.fingerprint;
  return m;
}

// ---------------------------------------------------------------------------

struct MakeDatasetArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  std::size_t count = 0;
  bool force = false;
};

int make_dataset_cmd(const MakeDatasetArgs& a) {
  RunConfig rc;
  if (!a.config.empty()) rc = load_run_config(a.config);
  const fs::path out(a.out);
  if (non_empty_dir(out) && !a.force) {
    std::cerr << "error: " << out << " exists and is not empty (use --force to replace it)\n";
    return kUsage;
  }

  // Build everything in a sibling staging directory, then swap it in.
  fs::path stage = out;
  stage += ".partial";
  fs::remove_all(stage);
  Json manifest{{"seed", a.seed}, {"count", a.count}, {"data", to_json(rc.data)}, {"samples", Json::array()}};
  try {
    for (std::size_t i = 0; i < a.count; ++i) {
      const auto tr = generate_triplet<float>(a.seed, i, rc.data);
      write_triplet_folder(tr, stage / tr.name);
      manifest["samples"].push_back({{"name", tr.name}, {"t", tr.t}, {"checksum", hex64(checksum(tr))}});
    }
    io::atomic_write(stage / "manifest.json", manifest.dump(2) + "\n");
    fs::remove_all(out);
    fs::rename(stage, out);
  } catch (...) {
    fs::remove_all(stage);
    throw;
  }
  std::cout << "wrote " << a.count << " triplets to " << out.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out, resume;
  std::optional<std::uint64_t> seed;
};

int train_cmd(const TrainArgs& a) {
  RunConfig rc = load_run_config(a.config);
  if (a.seed) rc.train.seed = *a.seed;
  const auto data = load_data(a.data);
  const DataSplit split = split_dataset(data.size(), rc.train);
  if (rc.loss.beta > 0) {
    for (std::size_t i = 0; i < split.train_count; ++i)
      if (!data[i].has_flows()) {
        std::cerr << "error: loss.beta = " << rc.loss.beta
                  << " enables flow distillation, which compares every cascade level's flows to teacher flows, but "
                  << "sample '" << data[i].name << "' has no flow_t0.flo/flow_t1.flo; set loss.beta to 0 or add "
                  << "teacher flows\n";
        return kUsage;
      }
  }

  std::optional<TrainState<float>> resume;
  if (!a.resume.empty()) {
    if (!fs::exists(a.resume)) throw DataError("resume checkpoint not found: " + a.resume);
    resume = restore_state(io::read_checkpoint<float>(a.resume), rc.model, rc.train.weight_decay);
  }

  const fs::path out(a.out);
  fs::create_directories(out);
  io::atomic_write(out / "config.json", to_json(rc).dump(2) + "\n");
  std::ofstream log(out / "metrics.jsonl", resume ? std::ios::app : std::ios::trunc);

  TrainHooks<float> hooks;
  hooks.on_record = [&](const LogRecord& r) {
    log << r.to_json().dump() << "\n";
    if (r.psnr) {
      log.flush();
      std::printf("step %lld  loss %.5f  psnr %.2f dB\n", static_cast<long long>(r.step + 1), r.loss, *r.psnr);
      std::fflush(stdout);
    }
  };
  hooks.on_checkpoint = [&](const TrainState<float>& st) {
    char name[40];
    std::snprintf(name, sizeof name, "step_%07lld.mavfi", static_cast<long long>(st.step));
    checkpoint_save(st, rc.model, out / name);
    checkpoint_save(st, rc.model, out / "last.mavfi");
  };

  const TripletTeacher<float> teacher(data);
  auto res = train(rc.model, rc.train, rc.loss, data, teacher, hooks, std::move(resume));
  checkpoint_save(res.params, rc.model, out / "final.mavfi", res.total_steps);
  std::cout << "trained " << res.total_steps << " steps on " << split.train_count << " triplets; checkpoint "
            << (out / "final.mavfi").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct InterpolateArgs {
  std::string ckpt, frame0, frame1, out;
  int factor = 2;
};

int interpolate_cmd(const InterpolateArgs& a) {
  const auto model = load_model(a.ckpt);
  const auto i0 = io::read_image(a.frame0);
  const auto i1 = io::read_image(a.frame1);
  if (i0.tensor().shape() != i1.tensor().shape())
    throw DataError("input frames differ in size: " + std::to_string(i0.width()) + "x" + std::to_string(i0.height()) +
                    " vs " + std::to_string(i1.width()) + "x" + std::to_string(i1.height()));
  const auto frames = multiframe(i0, i1, model.params, model.cfg, a.factor - 1);
  const fs::path out(a.out);
  for (const auto& f : frames) {
    const fs::path p = out / (timestep_label(f.t) + ".png");
    io::write_image(f.frame, p);
    std::cout << p.string() << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, data, report, dump;
};

int eval_cmd(const EvalArgs& a) {
  const auto model = load_model(a.ckpt);
  const auto data = load_data(a.data);
  EvalOptions opts;
  if (!a.dump.empty()) opts.dump_dir = fs::path(a.dump);
  const auto rep = evaluate(data, model.params, model.cfg, opts);
  io::atomic_write(a.report, rep.to_jsonl());
  std::cout << rep.to_table();
  return kOk;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string config, data, report;
  std::vector<std::uint64_t> seeds;
  int max_depth = 4;
};

int ablate_cmd(const AblateArgs& a) {
  const RunConfig rc = load_run_config(a.config);
  const auto data = load_data(a.data);
  const DataSplit split = split_dataset(data.size(), rc.train);
  const std::vector<Triplet<float>> train_set(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(split.train_count));
  const std::vector<Triplet<float>> val_set =
      split.holdout_count > 0 ? std::vector<Triplet<float>>(data.begin() + static_cast<std::ptrdiff_t>(split.train_count), data.end())
                              : train_set;
  const auto rep = ablation_suite(rc, train_set, val_set, a.seeds, a.max_depth, [](std::uint64_t s, const std::string& v) {
    std::cerr << "seed " << s << ": " << v << "\n";
  });
  io::atomic_write(a.report, rep.to_json().dump(2) + "\n");
  std::cout << rep.to_text();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-aware video frame interpolation: data, training, inference, evaluation"};
  app.require_subcommand(1);

  MakeDatasetArgs mk;
  auto* c_make = app.add_subcommand("make-dataset", "Generate synthetic triplets with exact flows");
  c_make->add_option("--config", mk.config, "Run config (only the data section is used)")->check(CLI::ExistingFile);
  c_make->add_option("--out", mk.out, "Output directory")->required();
  c_make->add_option("--seed", mk.seed, "Dataset seed");
  c_make->add_option("--count", mk.count, "Number of triplets")->required()->check(CLI::PositiveNumber);
  c_make->add_flag("--force", mk.force, "Replace an existing output directory");

  TrainArgs tr;
  std::uint64_t train_seed = 0;
  auto* c_train = app.add_subcommand("train", "Train a model");
  c_train->add_option("--config", tr.config, "Run config")->required()->check(CLI::ExistingFile);
  c_train->add_option("--data", tr.data, "Triplet directory")->required();
  c_train->add_option("--out", tr.out, "Output directory for checkpoints and metrics.jsonl")->required();
  c_train->add_option("--resume", tr.resume, "Checkpoint to resume from");
  auto* seed_opt = c_train->add_option("--seed", train_seed, "Override train.seed");

  InterpolateArgs ip;
  auto* c_interp = app.add_subcommand("interpolate", "Synthesize intermediate frames");
  c_interp->add_option("--ckpt", ip.ckpt, "Checkpoint")->required();
  c_interp->add_option("--frame0", ip.frame0, "First frame")->required();
  c_interp->add_option("--frame1", ip.frame1, "Second frame")->required();
  c_interp->add_option("--factor", ip.factor, "Frame-rate factor")->check(CLI::IsMember({2, 4, 6}));
  c_interp->add_option("--out", ip.out, "Output directory")->required();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a triplet directory");
  c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  c_eval->add_option("--data", ev.data, "Triplet directory")->required();
  c_eval->add_option("--report", ev.report, "Line-delimited JSON report path")->required();
  c_eval->add_option("--dump", ev.dump, "Directory for predicted/ground-truth/difference images");

  AblateArgs ab;
  auto* c_ablate = app.add_subcommand("ablate", "Train and compare ablation variants");
  c_ablate->add_option("--config", ab.config, "Base run config")->required()->check(CLI::ExistingFile);
  c_ablate->add_option("--data", ab.data, "Triplet directory")->required();
  c_ablate->add_option("--seeds", ab.seeds, "Seeds, comma separated")->required()->delimiter(',');
  c_ablate->add_option("--report", ab.report, "JSON report path")->required();
  c_ablate->add_option("--max-depth", ab.max_depth, "Largest depth in the sweep")->check(CLI::Range(1, 5));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*c_make) return make_dataset_cmd(mk);
    if (*c_train) {
      if (*seed_opt) tr.seed = train_seed;
      return train_cmd(tr);
    }
    if (*c_interp) return interpolate_cmd(ip);
    if (*c_eval) return eval_cmd(ev);
    if (*c_ablate) return ablate_cmd(ab);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ContractError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
