#include "lenslearn/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iostream>
#include <numeric>

#include "lenslearn/checkpoint.hpp"
#include "lenslearn/io.hpp"
#include "lenslearn/report.hpp"
#include "lenslearn/rng.hpp"
#include "lenslearn/train.hpp"

namespace lenslearn::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::uint64_t seed_for(const Config& cfg, const std::string& stream) {
  return derive_seed(cfg.u64("run.seed"), {hash_name(stream)});
}

optics::OpticsConfig optics_config(const Config& cfg, std::size_t object_h, std::size_t object_w) {
  optics::OpticsConfig o;
  o.object_h = object_h;
  o.object_w = object_w;
  o.sensor_h = cfg.count("optics.sensor_h");
  o.sensor_w = cfg.count("optics.sensor_w");
  o.distance_mm = cfg.real("optics.distance_mm");
  o.smoothing_sigma = cfg.real("optics.smoothing_sigma");
  o.speckle_density = cfg.real("optics.speckle_density");
  o.noise_floor = cfg.real("optics.noise_floor");
  o.neighbor_coupling = cfg.real("optics.neighbor_coupling");
  o.seed = cfg.u64("optics.seed");
  o.read_noise_sigma = cfg.real("optics.read_noise_sigma");
  o.frames_per_capture = cfg.count("optics.frames");
  o.validate();
  return o;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const DimensionError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  return 1;
}

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
 public:
  Manifest(std::string subcommand, const Config& cfg) : subcommand_(std::move(subcommand)), cfg_(cfg) {}

  void seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }
  void input(const fs::path& path) { inputs_[path.string()] = file_hash(path); }
  // Upstream manifests carry a timestamp; their run id is the stable identity.
  void upstream(const fs::path& path, const std::string& run_id) { inputs_[path.string()] = "run:" + run_id; }
  void output(const fs::path& path) {
    const auto s = path.string();
    if (std::find(outputs_.begin(), outputs_.end(), s) == outputs_.end()) outputs_.push_back(s);
  }

  void write(const fs::path& dir, const CommandResult& result, const std::string& error) const {
    json j;
    std::string id_source = subcommand_ + "\n" + cfg_.to_ini();
    for (const auto& [path, hash] : inputs_.items()) id_source += path + "=" + hash.get<std::string>() + "\n";
    j["run_id"] = hex64(content_hash(std::span(reinterpret_cast<const std::uint8_t*>(id_source.data()),
                                               id_source.size())));
    j["timestamp"] = utc_timestamp();
    j["subcommand"] = subcommand_;
    j["status"] = error.empty() ? "ok" : "failed";
    j["error"] = error.empty() ? json(nullptr) : json(error);
    json config = json::object();
    for (const auto& [k, v] : cfg_.entries()) config[k] = v;
    j["config"] = config;
    j["seeds"] = seeds_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["tags"] = result.tags;
    json metrics = json::object();
    for (const auto& [k, v] : result.metrics) metrics[k] = std::isfinite(v) ? json(v) : json(nullptr);
    j["metrics"] = metrics;
    j["problems"] = result.problems;
    write_text(dir / "manifest.json", j.dump(2) + "\n");
  }

 private:
  std::string subcommand_;
  const Config& cfg_;
  json seeds_ = json::object();
  json inputs_ = json::object();
  std::vector<std::string> outputs_;
};

// Every file a command writes goes through here so the manifest lists it.
struct Run {
  const Config& cfg;
  Manifest manifest;
  CommandResult result;
  fs::path out;
  bool verbose;

  Run(const std::string& subcommand, const Config& c)
      : cfg(c), manifest(subcommand, c), out(c.path("run.out")), verbose(c.flag("run.verbose")) {
    result.out_dir = out;
  }

  fs::path file(const std::string& name) {
    manifest.output(name);
    return out / name;
  }
  void say(const std::string& line) {
    result.messages.push_back(line);
    if (verbose) std::clog << line << "\n";
  }
  std::uint64_t seed(const std::string& stream) {
    const auto s = seed_for(cfg, stream);
    manifest.seed(stream, s);
    return s;
  }
};

template <typename Fn>
CommandResult run_command(const std::string& subcommand, const Config& cfg, Fn&& body) {
  Run run(subcommand, cfg);
  if (run.out.empty()) throw ConfigError("run.out must name an output directory");
  try {
    fs::create_directories(run.out);
    run.manifest.seed("run.seed", cfg.u64("run.seed"));
    body(run);
    write_text(run.file("config.ini"), cfg.to_ini());
    run.manifest.write(run.out, run.result, "");
  } catch (const std::exception& e) {
    try {
      run.manifest.write(run.out, run.result, e.what());
    } catch (...) {
    }
    throw;
  }
  return run.result;
}

fs::path required_dir(const Config& cfg, const std::string& key, const std::string& needed_by) {
  const auto p = cfg.path(key);
  if (p.empty()) throw ConfigError(needed_by + " needs " + key);
  if (!fs::is_directory(p)) throw ConfigError(key + " = " + p.string() + " is not a directory");
  return p;
}

data::LabeledImageSet load_input(Run& run, const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("missing input file " + path.string());
  run.manifest.input(path);
  return data::load_packed(path);
}

std::string dataset_name(const fs::path& prepared) {
  const auto path = prepared / "manifest.json";
  if (!fs::exists(path)) return "unknown";
  const auto bytes = read_file(path);
  const auto j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded() || !j.contains("config") || !j["config"].contains("data.name")) return "unknown";
  return j["config"]["data.name"].get<std::string>();
}

std::string class_counts(const data::LabeledImageSet& set) {
  std::vector<std::size_t> counts(set.num_classes, 0);
  for (int l : set.labels) counts[static_cast<std::size_t>(l)] += 1;
  std::string out;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    out += (c ? " " : "") + std::to_string(c) + ":" + std::to_string(counts[c]);
  }
  return out;
}

nn::UNetConfig unet_config(const Config& cfg) {
  nn::UNetConfig u;
  u.depth = cfg.count("recon.depth");
  u.base_channels = cfg.count("recon.base_channels");
  u.input_hw = cfg.count("recon.size");
  u.residual_in_block = cfg.flag("recon.residual");
  u.init_seed = cfg.u64("recon.init_seed");
  u.validate();
  return u;
}

train::TrainPlan plan_for(Run& run, const std::string& section) {
  train::TrainPlan plan;
  plan.max_epochs = run.cfg.count(section + ".epochs");
  plan.batch_size = run.cfg.count(section + ".batch_size");
  plan.checkpoint_every = run.cfg.count(section + ".checkpoint_every");
  plan.shuffle_seed = run.seed(section + ".shuffle");
  plan.checkpoint_dir = run.out / "checkpoints";
  fs::remove_all(plan.checkpoint_dir);  // stale files from an earlier run would end up in the manifest
  plan.record_timing = run.cfg.flag("run.timing");
  if (plan.max_epochs < 1) throw ConfigError(section + ".epochs must be at least 1");
  if (plan.batch_size < 1) throw ConfigError(section + ".batch_size must be at least 1");
  return plan;
}

void list_checkpoints(Run& run, const train::TrainPlan& plan) {
  if (!fs::exists(plan.checkpoint_dir)) return;
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(plan.checkpoint_dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  for (const auto& n : names) run.manifest.output("checkpoints/" + n);
}

std::string fmt(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

data::LabeledImageSet first_n(const data::LabeledImageSet& set, std::size_t n) {
  std::vector<std::size_t> idx(std::min(n, set.count()));
  std::iota(idx.begin(), idx.end(), 0);
  return data::subset(set, idx);
}

// input | target | output tiles for the first `count` items.
data::LabeledImageSet preview(nn::UNet<float>& net, const data::ReconPairs& pairs, std::size_t count) {
  const std::size_t n = std::min(count, pairs.count());
  const std::size_t s = pairs.inputs.rank() == 4 ? pairs.inputs.dim(2) : 0;
  data::LabeledImageSet out;
  out.images = Tensor({n, 3, s, s});
  out.num_classes = 1;
  for (std::size_t i = 0; i < n; ++i) {
    out.labels.push_back(pairs.labels[i]);
    out.num_classes = std::max(out.num_classes, static_cast<std::size_t>(pairs.labels[i]) + 1);
  }
  if (n == 0) return out;
  const Tensor in = slice_batch(pairs.inputs, 0, n);
  const Tensor tg = slice_batch(pairs.targets, 0, n);
  const Tensor pr = train::reconstruct_all(net, in, n);
  const std::size_t px = s * s;
  for (std::size_t i = 0; i < n; ++i) {
    float* dst = out.images.data().data() + i * 3 * px;
    std::copy_n(in.data().data() + i * px, px, dst);
    std::copy_n(tg.data().data() + i * px, px, dst + px);
    std::copy_n(pr.data().data() + i * px, px, dst + 2 * px);
  }
  return out;
}

}  // namespace

CommandResult prepare(const Config& cfg) {
  return run_command("prepare", cfg, [&](Run& run) {
    const auto name = cfg.get("data.name");
    if (name != "mnist6" && name != "emnist" && name != "kanji49") {
      throw ConfigError("data.name '" + name + "' is not one of mnist6, emnist, kanji49");
    }
    data::LabeledImageSet set;
    if (!cfg.get("data.packed").empty()) {
      set = load_input(run, cfg.path("data.packed"));
    } else {
      if (cfg.get("data.images").empty() || cfg.get("data.labels").empty()) {
        throw ConfigError("prepare needs data.images and data.labels (or data.packed)");
      }
      for (const auto* key : {"data.images", "data.labels"}) {
        if (!fs::exists(cfg.path(key))) throw ValidationError("missing input file " + cfg.get(key));
        run.manifest.input(cfg.path(key));
      }
      set = data::load_idx(cfg.path("data.images"), cfg.path("data.labels"));
    }
    run.say("loaded " + std::to_string(set.count()) + " images of " + std::to_string(set.height()) + "x" +
            std::to_string(set.width()) + " from " + set.source);

    if (name == "mnist6") {
      set = data::subsample_mnist6(set, cfg.count("data.target_per_class"), run.seed("subsample"));
    }
    const std::size_t size = cfg.count("data.object_size");
    if (set.height() > size || set.width() > size) {
      throw ConfigError("data.object_size " + std::to_string(size) + " is smaller than the " +
                        std::to_string(set.height()) + "x" + std::to_string(set.width()) + " images");
    }
    set = data::pad_set(set, size, size);

    auto [train_set, test_set] = data::split_train_test(set, {cfg.real("data.train_fraction"), run.seed("split")});
    train_set.num_classes = test_set.num_classes = set.num_classes;
    data::save_packed(run.file("train.llds"), train_set);
    data::save_packed(run.file("test.llds"), test_set);

    run.say(name + ": " + std::to_string(set.count()) + " images, " + std::to_string(set.num_classes) +
            " classes, split " + std::to_string(train_set.count()) + "/" + std::to_string(test_set.count()));
    run.say("train per class " + class_counts(train_set));
    run.say("test per class  " + class_counts(test_set));
    run.result.tags["dataset"] = name;
    run.result.metrics["images"] = static_cast<double>(set.count());
    run.result.metrics["classes"] = static_cast<double>(set.num_classes);
    run.result.metrics["train_count"] = static_cast<double>(train_set.count());
    run.result.metrics["test_count"] = static_cast<double>(test_set.count());
  });
}

CommandResult simulate(const Config& cfg) {
  return run_command("simulate", cfg, [&](Run& run) {
    const auto prepared = required_dir(cfg, "inputs.prepared", "simulate");
    const auto train_set = load_input(run, prepared / "train.llds");
    const auto test_set = load_input(run, prepared / "test.llds");
    const std::size_t size = cfg.count("data.object_size");
    const std::size_t oh = train_set.count() ? train_set.height() : size;
    const std::size_t ow = train_set.count() ? train_set.width() : size;

    const auto ocfg = optics_config(cfg, oh, ow);
    const auto op = optics::build_transfer_operator(ocfg);
    const double cond = optics::condition_number(op);
    run.say("transfer operator " + std::to_string(op.rows()) + "x" + std::to_string(op.cols()) + ", hash " +
            op.content_hash() + ", condition number " + fmt(cond, 2));
    run.result.metrics["condition_number"] = cond;
    run.result.metrics["full_scale"] = op.full_scale();

    json sidecar;
    sidecar["object_h"] = ocfg.object_h;
    sidecar["object_w"] = ocfg.object_w;
    sidecar["sensor_h"] = ocfg.sensor_h;
    sidecar["sensor_w"] = ocfg.sensor_w;
    sidecar["distance_mm"] = ocfg.distance_mm;
    sidecar["smoothing_sigma"] = ocfg.smoothing_sigma;
    sidecar["speckle_density"] = ocfg.speckle_density;
    sidecar["noise_floor"] = ocfg.noise_floor;
    sidecar["neighbor_coupling"] = ocfg.neighbor_coupling;
    sidecar["seed"] = ocfg.seed;
    sidecar["read_noise_sigma"] = ocfg.read_noise_sigma;
    sidecar["frames_per_capture"] = ocfg.frames_per_capture;
    sidecar["operator_hash"] = op.content_hash();
    sidecar["full_scale"] = op.full_scale();
    sidecar["condition_number"] = std::isfinite(cond) ? json(cond) : json(nullptr);

    if (cfg.flag("optics.check_linearity")) {
      Rng rng(run.seed("linearity"));
      Tensor a({oh, ow}), b({oh, ow}), ab({oh, ow});
      for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = static_cast<float>(0.5 * rng.uniform());
        b[i] = static_cast<float>(0.5 * rng.uniform());
        ab[i] = a[i] + b[i];
      }
      const Tensor sa = op.apply(a), sb = op.apply(b), sab = op.apply(ab);
      double worst = 0;
      for (std::size_t i = 0; i < sab.size(); ++i) {
        const double sum = static_cast<double>(sa[i]) + sb[i];
        worst = std::max(worst, std::abs(sab[i] - sum) / std::max(std::abs(sum), 1e-12));
      }
      run.say("linearity check: max relative error " + std::to_string(worst));
      run.result.metrics["linearity_rel_error"] = worst;
      sidecar["linearity_rel_error"] = worst;
      if (worst > 1e-6) throw NumericError("superposition check failed, relative error " + std::to_string(worst));
    }

    const std::size_t threads = std::max<std::size_t>(1, cfg.count("run.threads"));
    const auto train_sensor = optics::render_dataset(train_set, op, run.seed("capture.train"), threads);
    const auto test_sensor = optics::render_dataset(test_set, op, run.seed("capture.test"), threads);
    data::save_packed(run.file("train_sensor.llds"), train_sensor);
    data::save_packed(run.file("test_sensor.llds"), test_sensor);
    write_text(run.file("optics.json"), sidecar.dump(2) + "\n");
    run.say("rendered " + std::to_string(train_sensor.count()) + " train and " +
            std::to_string(test_sensor.count()) + " test captures");
    run.result.tags["operator_hash"] = op.content_hash();
  });
}

CommandResult train_recon(const Config& cfg) {
  return run_command("train-recon", cfg, [&](Run& run) {
    const auto prepared = required_dir(cfg, "inputs.prepared", "train-recon");
    const auto simulated = required_dir(cfg, "inputs.simulated", "train-recon");
    const auto train_obj = load_input(run, prepared / "train.llds");
    const auto test_obj = load_input(run, prepared / "test.llds");
    const auto train_sensor = load_input(run, simulated / "train_sensor.llds");
    const auto test_sensor = load_input(run, simulated / "test_sensor.llds");

    const auto ucfg = unet_config(cfg);
    const std::size_t size = ucfg.input_hw;
    const auto train_pairs = data::make_recon_pairs(train_sensor, train_obj, size,
                                                    cfg.real("recon.target_noise_variance"),
                                                    run.seed("recon.target_noise"));
    const auto test_pairs = data::make_recon_pairs(test_sensor, test_obj, size, 0.0, 0);

    auto net = nn::build_unet<float>(ucfg);
    run.say("u-net depth " + std::to_string(ucfg.depth) + ", base " + std::to_string(ucfg.base_channels) + ", " +
            std::to_string(nn::count_parameters(net)) + " parameters, " + std::to_string(train_pairs.count()) +
            " train / " + std::to_string(test_pairs.count()) + " test pairs at " + std::to_string(size) + "x" +
            std::to_string(size));

    auto plan = plan_for(run, "recon");
    train::AdamState<float> adam;
    adam.lr = cfg.real("recon.lr");
    auto progress = [&](const train::MetricRecord& tr, const train::MetricRecord& te) {
      run.say("epoch " + std::to_string(tr.epoch) + " train loss " + fmt(tr.loss) + " mae " + fmt(*tr.mae) +
              " | test loss " + fmt(te.loss) + " mae " + fmt(*te.mae));
    };
    train::ReconResult res;
    try {
      res = train::train_reconstruction(net, train_pairs, test_pairs, plan, adam, progress);
    } catch (...) {
      list_checkpoints(run, plan);
      throw;
    }
    list_checkpoints(run, plan);
    train::write_metrics_csv(run.file("metrics.csv"), res.records);

    // constant predictor: the per-pixel mean of the training targets
    const std::size_t px = size * size;
    Tensor mean({1, 1, size, size});
    for (std::size_t i = 0; i < train_pairs.count(); ++i) {
      for (std::size_t k = 0; k < px; ++k) mean[k] += train_pairs.targets[i * px + k];
    }
    for (auto& v : mean.data()) v /= static_cast<float>(std::max<std::size_t>(train_pairs.count(), 1));
    Tensor baseline(test_pairs.targets.shape());
    for (std::size_t i = 0; i < test_pairs.count(); ++i) {
      std::copy_n(mean.data().data(), px, baseline.data().data() + i * px);
    }
    const auto base = train::evaluate_mae_mse(baseline, test_pairs.targets);

    const std::size_t k = cfg.count("recon.preview_samples");
    const auto clean_train =
        data::make_recon_pairs(first_n(train_sensor, k), first_n(train_obj, k), size, 0.0, 0);
    data::save_packed(run.file("preview_train.llds"), preview(net, clean_train, k));
    data::save_packed(run.file("preview_test.llds"), preview(net, test_pairs, k));

    const auto& tr = res.records[res.records.size() - 2];
    const auto& te = res.records.back();
    auto& m = run.result.metrics;
    m["train_mae"] = *tr.mae;
    m["train_mse"] = *tr.mse;
    m["test_mae"] = *te.mae;
    m["test_mse"] = *te.mse;
    m["best_epoch"] = static_cast<double>(res.best_epoch);
    m["best_test_mae"] = res.best_test_mae;
    m["mean_predictor_test_mae"] = base.mae;
    m["images"] = static_cast<double>(train_obj.count() + test_obj.count());
    m["classes"] = static_cast<double>(std::max(train_obj.num_classes, test_obj.num_classes));
    m["parameters"] = static_cast<double>(nn::count_parameters(net));
    const auto sidecar_path = simulated / "optics.json";
    if (fs::exists(sidecar_path)) {
      const auto bytes = read_file(sidecar_path);
      const auto sc = json::parse(bytes.begin(), bytes.end(), nullptr, false);
      if (!sc.is_discarded() && sc.contains("condition_number") && sc["condition_number"].is_number()) {
        m["condition_number"] = sc["condition_number"].get<double>();
      }
      run.manifest.input(sidecar_path);
    }
    run.result.tags["dataset"] = dataset_name(prepared);
    run.say("final train mae " + fmt(*tr.mae) + ", test mae " + fmt(*te.mae) + " (mean predictor " +
            fmt(base.mae) + ")");
  });
}

std::pair<data::LabeledImageSet, data::LabeledImageSet> route_sets(const Config& cfg, data::Route route) {
  data::ClassifierGeometry geo;
  geo.raw_h = cfg.count("classifier.raw_h");
  geo.raw_w = cfg.count("classifier.raw_w");
  geo.original_h = cfg.count("classifier.original_h");
  geo.original_w = cfg.count("classifier.original_w");
  const std::string who = "classifier.route=" + data::route_name(route);

  if (route == data::Route::original) {
    const auto prepared = required_dir(cfg, "inputs.prepared", who);
    return {data::resize_set_for_classifier(data::load_packed(prepared / "train.llds"), route, geo),
            data::resize_set_for_classifier(data::load_packed(prepared / "test.llds"), route, geo)};
  }
  const auto simulated = required_dir(cfg, "inputs.simulated", who);
  auto train_sensor = data::load_packed(simulated / "train_sensor.llds");
  auto test_sensor = data::load_packed(simulated / "test_sensor.llds");
  if (route == data::Route::raw) {
    return {data::resize_set_for_classifier(train_sensor, route, geo),
            data::resize_set_for_classifier(test_sensor, route, geo)};
  }

  const auto recon_dir = cfg.path("inputs.recon_run");
  if (recon_dir.empty()) throw ConfigError(who + " needs inputs.recon_run (a train-recon output directory)");
  const auto ckpt = recon_dir / "checkpoints" / "final.lltn";
  if (!fs::exists(ckpt)) {
    throw ConfigError("no reconstruction checkpoint at " + ckpt.string() + "; run train-recon into " +
                      recon_dir.string() + " first");
  }
  const Config recon_cfg = Config::from_file(recon_dir / "config.ini");
  auto net = nn::build_unet<float>(unet_config(recon_cfg));
  load_checkpoint(ckpt, net);
  const std::size_t size = recon_cfg.count("recon.size");
  auto reconstruct = [&](const data::LabeledImageSet& sensor) {
    // objects only supply labels and shape here; their values are unused
    data::LabeledImageSet blank = sensor;
    blank.images = Tensor({sensor.count(), 1, size, size});
    const auto pairs = data::make_recon_pairs(sensor, blank, size, 0.0, 0);
    data::LabeledImageSet out;
    out.images = train::reconstruct_all(net, pairs.inputs, cfg.count("classifier.batch_size"));
    out.labels = sensor.labels;
    out.num_classes = sensor.num_classes;
    out.source = sensor.source + " (reconstructed)";
    return data::resize_set_for_classifier(out, route, geo);
  };
  return {reconstruct(train_sensor), reconstruct(test_sensor)};
}

CommandResult train_clf(const Config& cfg) {
  return run_command("train-clf", cfg, [&](Run& run) {
    const auto route = data::parse_route(cfg.get("classifier.route"));
    auto [train_set, test_set] = route_sets(cfg, route);
    for (const auto* key : {"inputs.prepared", "inputs.simulated"}) {
      const auto dir = cfg.path(key);
      if (dir.empty()) continue;
      for (const auto* f : {"train.llds", "test.llds", "train_sensor.llds", "test_sensor.llds"}) {
        if (fs::exists(dir / f)) run.manifest.input(dir / f);
      }
    }
    if (route == data::Route::reconstructed) {
      run.manifest.input(cfg.path("inputs.recon_run") / "checkpoints" / "final.lltn");
    }

    nn::ClassifierConfig ccfg;
    ccfg.input_h = train_set.height();
    ccfg.input_w = train_set.width();
    ccfg.num_classes = std::max(train_set.num_classes, test_set.num_classes);
    ccfg.width_multiplier = cfg.real("classifier.width_multiplier");
    ccfg.init_seed = cfg.u64("classifier.init_seed");
    auto net = nn::build_classifier<float>(ccfg);
    run.say("classifier route " + data::route_name(route) + ", input " + std::to_string(ccfg.input_h) + "x" +
            std::to_string(ccfg.input_w) + ", " + std::to_string(nn::count_parameters(net)) + " parameters, " +
            std::to_string(train_set.count()) + " train / " + std::to_string(test_set.count()) + " test");

    auto plan = plan_for(run, "classifier");
    train::AdamState<float> adam;
    adam.lr = cfg.real("classifier.lr");
    auto progress = [&](const train::MetricRecord& tr, const train::MetricRecord& te) {
      run.say("epoch " + std::to_string(tr.epoch) + " train loss " + fmt(tr.loss) + " acc " + fmt(*tr.accuracy) +
              " | test loss " + fmt(te.loss) + " acc " + fmt(*te.accuracy));
    };
    train::ClassifierResult res;
    try {
      res = train::train_classifier(net, train_set, test_set, plan, adam, progress);
    } catch (...) {
      list_checkpoints(run, plan);
      throw;
    }
    list_checkpoints(run, plan);
    for (std::size_t i = 0; i < res.records.size(); ++i) {
      if (*res.records[i].accuracy != nn::accuracy(res.confusions[i])) {
        throw NumericError("accuracy of record " + std::to_string(i) + " disagrees with its confusion matrix");
      }
    }
    train::write_metrics_csv(run.file("metrics.csv"), res.records);
    write_text(run.file("confusion.csv"), report::confusion_csv(res.confusion));
    write_text(run.file("confusion_train.csv"), report::confusion_csv(res.train_confusion));

    run.result.metrics["train_accuracy"] = res.train_accuracy;
    run.result.metrics["test_accuracy"] = res.test_accuracy;
    run.result.metrics["parameters"] = static_cast<double>(nn::count_parameters(net));
    run.result.tags["route"] = data::route_name(route);
    const auto prepared = cfg.path("inputs.prepared");
    run.result.tags["dataset"] = prepared.empty() ? "unknown" : dataset_name(prepared);
    run.say("final train accuracy " + fmt(res.train_accuracy) + ", test accuracy " + fmt(res.test_accuracy));
  });
}

CommandResult report(const Config& cfg, const std::vector<fs::path>& run_dirs) {
  return run_command("report", cfg, [&](Run& run) {
    report::GridLayout layout;
    layout.gutter = cfg.count("report.gutter");
    const std::size_t samples = cfg.count("report.samples");
    std::vector<report::DatasetRow> table;
    std::vector<report::AccuracyRow> accuracy;

    auto skip = [&](const fs::path& dir, const std::string& why) {
      run.result.problems.push_back(dir.string() + ": " + why);
      run.say("skipped " + dir.string() + ": " + why);
    };

    for (const auto& dir : run_dirs) {
      const auto manifest_path = dir / "manifest.json";
      if (!fs::exists(manifest_path)) {
        skip(dir, "no manifest.json");
        continue;
      }
      const auto bytes = read_file(manifest_path);
      const auto m = json::parse(bytes.begin(), bytes.end(), nullptr, false);
      if (m.is_discarded() || !m.contains("subcommand") || !m.contains("run_id")) {
        skip(dir, "unreadable manifest.json");
        continue;
      }
      run.manifest.upstream(manifest_path, m["run_id"].get<std::string>());
      if (m.value("status", "") != "ok") {
        skip(dir, "run did not finish");
        continue;
      }
      const auto sub = m["subcommand"].get<std::string>();
      if (sub != "train-recon" && sub != "train-clf") continue;
      const auto metrics_path = dir / "metrics.csv";
      if (!fs::exists(metrics_path)) {
        skip(dir, "no metrics.csv");
        continue;
      }
      run.manifest.input(metrics_path);
      const auto records = train::read_metrics_csv(metrics_path);
      if (records.size() < 2) {
        skip(dir, "metrics.csv has no complete epoch");
        continue;
      }
      const auto& tr = records[records.size() - 2];
      const auto& te = records.back();
      const std::string label = fs::absolute(dir).lexically_normal().filename().string().empty()
                                    ? fs::absolute(dir).lexically_normal().parent_path().filename().string()
                                    : fs::absolute(dir).lexically_normal().filename().string();
      const auto& tags = m["tags"];
      const std::string dataset = tags.value("dataset", "unknown");

      if (sub == "train-recon") {
        if (!tr.mae || !te.mae) {
          skip(dir, "metrics.csv lacks mae");
          continue;
        }
        const auto& mm = m["metrics"];
        table.push_back({dataset, static_cast<std::size_t>(mm.value("images", 0.0)),
                         static_cast<std::size_t>(mm.value("classes", 0.0)), *tr.mae, *te.mae});
        for (const std::string split : {"train", "test"}) {
          const auto path = dir / ("preview_" + split + ".llds");
          if (!fs::exists(path)) {
            skip(dir, "no preview_" + split + ".llds");
            continue;
          }
          run.manifest.input(path);
          const auto pv = data::load_packed(path);
          layout.cell = pv.height();
          std::vector<std::vector<Tensor>> rows;
          const std::size_t px = pv.height() * pv.width();
          for (std::size_t i = 0; i < std::min(samples, pv.count()); ++i) {
            std::vector<Tensor> tiles;
            for (std::size_t c = 0; c < 3; ++c) {
              Tensor t({pv.height(), pv.width()});
              std::copy_n(pv.images.data().data() + (i * 3 + c) * px, px, t.data().data());
              tiles.push_back(std::move(t));
            }
            rows.push_back(std::move(tiles));
          }
          report::write_pgm(run.file(label + "_recon_" + split + ".pgm"), report::tile_grid(rows, layout));
        }
      } else {
        if (!tr.accuracy || !te.accuracy) {
          skip(dir, "metrics.csv lacks accuracy");
          continue;
        }
        accuracy.push_back({dataset, tags.value("route", "unknown"), *tr.accuracy, *te.accuracy});
        const auto conf_path = dir / "confusion.csv";
        if (!fs::exists(conf_path)) {
          skip(dir, "no confusion.csv");
          continue;
        }
        run.manifest.input(conf_path);
        const auto text = read_file(conf_path);
        const auto conf = report::parse_confusion_csv(std::string(text.begin(), text.end()), conf_path.string());
        write_text(run.file(label + "_confusion.csv"), report::confusion_csv(conf));
        report::write_pgm(run.file(label + "_confusion.pgm"), report::confusion_heatmap(conf));
      }
    }
    write_text(run.file("table1.csv"), report::dataset_summary_csv(table));
    write_text(run.file("accuracy_summary.csv"), report::accuracy_summary_csv(accuracy));
    run.say("report: " + std::to_string(table.size()) + " reconstruction runs, " + std::to_string(accuracy.size()) +
            " classifier runs, " + std::to_string(run.result.problems.size()) + " problems");
    run.result.metrics["problems"] = static_cast<double>(run.result.problems.size());
  });
}

}  // namespace lenslearn::pipeline
