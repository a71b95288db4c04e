// Acceptance run: one PASS/FAIL line per criterion. Exits 0 once every
// criterion was evaluated; --strict turns any FAIL into exit status 1.

#include <CLI11.hpp>
#include <json.hpp>
#include <zlib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "grad_cases.hpp"
#include "helpers.hpp"
#include "lenslearn/dataset.hpp"
#include "lenslearn/errors.hpp"
#include "lenslearn/io.hpp"
#include "lenslearn/ops.hpp"
#include "lenslearn/optics.hpp"
#include "lenslearn/report.hpp"
#include "lenslearn/train.hpp"

using namespace lenslearn;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

struct Env {
  fs::path work;
  fs::path data;
  std::string cli = LENSLEARN_CLI;
  fs::path images() const { return data / "mnist5k-images-idx3-ubyte.gz"; }
  fs::path labels() const { return data / "mnist5k-labels-idx1-ubyte.gz"; }
};

// Runs the command-line tool; stdout and stderr go to <log>.
int cli(const Env& env, const std::string& args, const fs::path& log) {
  const std::string cmd = env.cli + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void must(int code, const std::string& what) {
  if (code != 0) throw std::runtime_error(what + " exited with " + std::to_string(code));
}

json load_json(const fs::path& p) {
  const auto b = read_file(p);
  return json::parse(b.begin(), b.end());
}

std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return files;
}

// 1
Outcome conv_oracle() {
  const auto t0 = Clock::now();
  Rng rng(2025);
  double worst32 = 0, worst64 = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(2), c = 1 + rng.below(3), o = 1 + rng.below(3);
    const std::size_t h = 1 + rng.below(9), w = 1 + rng.below(9);
    const std::size_t pad = rng.below(2), stride = 1 + rng.below(2);
    const std::size_t kmax = std::min(std::min(h, w) + 2 * pad, std::size_t{3});
    const std::size_t kh = 1 + rng.below(kmax), kw = 1 + rng.below(kmax);
    auto x = testing_util::random_tensor<float>({n, c, h, w}, rng).cast<double>();
    auto k = testing_util::random_tensor<float>({o, c, kh, kw}, rng).cast<double>();
    auto b = testing_util::random_tensor<float>({o}, rng).cast<double>();
    const auto ref = testing_util::naive_conv(x, k, b, stride, pad);
    auto y32 = ops::conv2d_forward(x.cast<float>(), ops::ConvParams<float>{k.cast<float>(), b.cast<float>(), stride, pad});
    auto y64 = ops::conv2d_forward(x, ops::ConvParams<double>{k, b, stride, pad});
    if (y32.shape() != ref.shape()) return {false, "shape mismatch on trial " + std::to_string(trial)};
    double ref_max = 0, d32 = 0, d64 = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      ref_max = std::max(ref_max, std::abs(ref[i]));
      d32 = std::max(d32, std::abs(y32[i] - ref[i]));
      d64 = std::max(d64, std::abs(y64[i] - ref[i]));
    }
    worst32 = std::max(worst32, d32 / std::max(ref_max, 1e-30));
    worst64 = std::max(worst64, d64 / std::max(ref_max, 1e-30));
  }
  const double secs = seconds_since(t0);
  return {worst32 < 1e-5 && worst64 < 1e-5 && secs < 10,
          "100 shapes <= 2x3x9x9, max rel err 32-bit " + sci(worst32) + ", 64-bit " + sci(worst64) + ", " +
              sci(secs) + " s (tol 1e-5, < 10 s)"};
}

// 2
Outcome gradient_suite() {
  const auto t0 = Clock::now();
  struct Group {
    double e32 = 0, e64 = 0;
    std::size_t checks = 0, over = 0;
    std::set<std::string> names, failing;
  };
  Group prim, net;
  // Diagnostics for the composed net, outside the pass rule: how many single
  // gradient elements exceed the tolerance, and the agreement of the float
  // and double analytic gradients.
  std::size_t elems = 0, elems_over32 = 0, elems_over64 = 0;
  double f32_vs_f64 = 0;
  const std::size_t seeds = 20;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    for (int which = 0; which < 2; ++which) {
      auto cases = which == 0 ? grad_cases::primitive_cases(seed) : grad_cases::unet_cases(seed);
      Group& g = which == 0 ? prim : net;
      for (const auto& c : cases) {
        auto e = grad_cases::run_case(c, seed);
        if (std::isnan(e.err32)) e.err32 = INFINITY;
        if (std::isnan(e.err64)) e.err64 = INFINITY;
        g.names.insert(c.name);
        g.e32 = std::max(g.e32, e.err32);
        g.e64 = std::max(g.e64, e.err64);
        ++g.checks;
        if (e.err32 >= 1e-3 || e.err64 >= 1e-6) {
          ++g.over;
          g.failing.insert(c.name);
        }
        if (which == 1) {
          Rng rng(derive_seed(seed, {0x3e1}));
          const Tensor64 w = grad_cases::uniform(c.forward64(c.input).shape(), rng, 0.5, 1.5);
          const auto a64 = c.backward64(c.input, w);
          const auto a32 = c.backward32(c.input.cast<float>(), w.cast<float>());
          Tensor64 probe = c.input;
          auto diff = [&](std::size_t i, double eps) {
            probe[i] = c.input[i] + eps;
            const double up = ops::dot(c.forward64(probe), w);
            probe[i] = c.input[i] - eps;
            const double down = ops::dot(c.forward64(probe), w);
            probe[i] = c.input[i];
            return (up - down) / (2 * eps);
          };
          auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}); };
          for (std::size_t i = 0; i < a64.size(); ++i) {
            ++elems;
            elems_over32 += rel(a32[i], diff(i, 1e-3)) >= 1e-3;
            elems_over64 += rel(a64[i], diff(i, 1e-6)) >= 1e-6;
            f32_vs_f64 = std::max(f32_vs_f64, rel(a32[i], a64[i]) * (std::abs(a64[i]) > 1e-6));
          }
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  auto describe = [](const std::string& label, const Group& g) {
    std::string d = label + " " + std::to_string(g.names.size()) + " cases: worst 32-bit " + sci(g.e32) +
                    ", 64-bit " + sci(g.e64) + ", " + std::to_string(g.over) + "/" + std::to_string(g.checks) +
                    " checks over tolerance";
    if (!g.failing.empty()) {
      d += " (";
      std::size_t k = 0;
      for (const auto& n : g.failing) {
        if (k++ == 4) {
          d += ", ...";
          break;
        }
        d += (k > 1 ? ", " : "") + n;
      }
      d += ")";
    }
    return d;
  };
  const bool ok = prim.over == 0 && net.over == 0 && secs < 120;
  return {ok, std::to_string(seeds) + " seeds, tol 1e-3 (32-bit) / 1e-6 (64-bit); " + describe("ops", prim) + "; " +
                  describe("loss o unet", net) + "; composed-net elements over tolerance: " + std::to_string(elems_over32) + " (32-bit) and " +
                  std::to_string(elems_over64) + " (64-bit) of " + std::to_string(elems) +
                  ", float vs double analytic max rel " + sci(f32_vs_f64) + " on components > 1e-6; " + sci(secs) + " s"};
}

// 3
Outcome loss_closed_forms() {
  auto one = [](double v) { return Tensor64({1, 1, 1, 1}, v); };
  const double a = train::bce_pixel_loss(one(0.5), one(1.0));
  const double b = train::bce_pixel_loss(one(1.0), one(1.0));
  const double c = train::bce_pixel_loss(one(0.5), one(0.5));
  const double ln2 = 0.69314718055994531;
  double grad_max = 0;
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = testing_util::random_tensor<double>({2, 1, 8, 8}, rng, 0.001, 0.999);
    const auto d64 = train::bce_pixel_grad(g, g);
    for (double v : d64.data()) grad_max = std::max(grad_max, std::abs(v));
    const auto g32 = g.cast<float>();
    const auto d32 = train::bce_pixel_grad(g32, g32);
    for (float v : d32.data()) grad_max = std::max(grad_max, std::abs(double(v)));
  }
  const bool ok = std::abs(a - ln2) < 1e-6 && b >= 0 && b <= 1e-6 && std::abs(c - ln2) < 1e-6 && grad_max < 1e-8;
  return {ok, "L(p=.5,g=1) " + sci(a) + ", L(p=1,g=1) " + sci(b) + ", L(p=.5,g=.5) " + sci(c) +
                  ", max |grad| at p=g " + sci(grad_max)};
}

// 4
Outcome adam_trajectory() {
  // f(theta) = theta^2 from theta = 1 with lr 1e-3, betas (0.9, 0.999), eps 1e-8;
  // values produced by a separate scalar script.
  const double expected[3] = {0.999000000005, 0.9980000262138343, 0.9970000960651408};
  Tensor64 theta({1}, 1.0);
  theta.ensure_grad();
  train::AdamState<double> state;
  BasicTensor<double>* ps[] = {&theta};
  double worst = 0;
  for (int t = 0; t < 3; ++t) {
    theta.grad()[0] = 2 * theta[0];
    train::adam_step<double>(ps, state);
    worst = std::max(worst, std::abs(theta[0] - expected[t]));
  }
  return {worst < 1e-10, "3 steps, max |theta - oracle| " + sci(worst) + " (tol 1e-10)"};
}

// 5
Outcome determinism(const Env& env) {
  const fs::path root = env.work / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string common = " -s run.verbose=false -s data.target_per_class=20 -s optics.sensor_h=32 -s optics.sensor_w=43"
                             " -s recon.size=32 -s recon.depth=2 -s recon.base_channels=4 -s recon.epochs=2"
                             " -s recon.checkpoint_every=1 -s classifier.epochs=2 -s classifier.checkpoint_every=1"
                             " -s classifier.width_multiplier=0.0625 -s classifier.raw_h=32 -s classifier.raw_w=43";
  const std::string p = (root / "prep").string(), s = (root / "sim").string(), r = (root / "recon").string();
  auto run_all = [&] {
    must(cli(env, "prepare --images " + env.images().string() + " --labels " + env.labels().string() + " -o " + p + common,
             root / "prepare.log"),
         "prepare");
    must(cli(env, "simulate --prepared " + p + " -o " + s + common, root / "simulate.log"), "simulate");
    must(cli(env, "train-recon --prepared " + p + " --simulated " + s + " -o " + r + common, root / "recon.log"),
         "train-recon");
    for (const std::string route : {"original", "raw", "reconstructed"}) {
      must(cli(env, "train-clf --route " + route + " --prepared " + p + " --simulated " + s + " --recon-run " + r +
                        " -o " + (root / ("clf_" + route)).string() + common,
               root / ("clf_" + route + ".log")),
           "train-clf " + route);
    }
    must(cli(env, "report -o " + (root / "report").string() + common + " " + r + " " + (root / "clf_original").string() +
                      " " + (root / "clf_raw").string() + " " + (root / "clf_reconstructed").string(),
             root / "report.log"),
         "report");
  };
  const std::vector<std::string> dirs{"prep", "sim", "recon", "clf_original", "clf_raw", "clf_reconstructed", "report"};
  run_all();
  std::map<std::string, std::map<std::string, std::vector<std::uint8_t>>> first;
  for (const auto& d : dirs) first[d] = snapshot(root / d);
  run_all();
  std::size_t compared = 0, kinds_ckpt = 0, kinds_csv = 0, kinds_pgm = 0;
  std::vector<std::string> differing;
  for (const auto& d : dirs) {
    auto again = snapshot(root / d);
    if (again.size() != first[d].size()) differing.push_back(d + " (file count)");
    for (const auto& [name, bytes] : first[d]) {
      if (name == "manifest.json") {
        // identical apart from the wall-clock timestamp
        auto a = json::parse(bytes), b = json::parse(again[name]);
        a.erase("timestamp");
        b.erase("timestamp");
        if (a != b) differing.push_back(d + "/" + name);
        continue;
      }
      ++compared;
      kinds_ckpt += name.ends_with(".lltn");
      kinds_csv += name.ends_with(".csv");
      kinds_pgm += name.ends_with(".pgm");
      if (again[name] != bytes) differing.push_back(d + "/" + name);
    }
  }
  std::string detail = "7 subcommand runs repeated, " + std::to_string(compared) + " files compared (" +
                       std::to_string(kinds_ckpt) + " checkpoints, " + std::to_string(kinds_csv) + " CSVs, " +
                       std::to_string(kinds_pgm) + " PGMs)";
  if (!differing.empty()) detail += "; differing: " + differing.front() + (differing.size() > 1 ? " ..." : "");
  return {differing.empty() && kinds_ckpt > 0 && kinds_csv > 0 && kinds_pgm > 0, detail};
}

// 6
Outcome formats(const Env& env) {
  using Bytes = std::vector<std::uint8_t>;
  auto be = [](Bytes& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
  };
  auto header = [&](std::uint32_t magic, std::vector<std::uint32_t> dims) {
    Bytes b;
    be(b, magic);
    for (auto d : dims) be(b, d);
    return b;
  };
  const Bytes pixels{0, 255, 17, 34, 51, 68, 85, 102, 119, 136, 153, 170, 187, 204, 221, 238, 128, 1};
  Bytes images = header(0x803, {2, 3, 3});
  images.insert(images.end(), pixels.begin(), pixels.end());
  Bytes labels = header(0x801, {2});
  labels.push_back(4);
  labels.push_back(0);

  std::vector<std::string> bad;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };
  auto offset_of = [&](const Bytes& im, const Bytes& lb) -> long {
    try {
      data::parse_idx(im, lb);
    } catch (const ParseError& e) {
      return static_cast<long>(e.offset());
    } catch (...) {
      return -2;
    }
    return -1;
  };

  auto set = data::parse_idx(images, labels);
  bool exact = set.images.shape() == Shape{2, 1, 3, 3} && set.labels == std::vector<int>{4, 0};
  for (std::size_t i = 0; i < pixels.size(); ++i) exact = exact && set.images[i] == float(pixels[i]) / 255.0f;
  expect(exact && set.images[0] == 0.0f && set.images[1] == 1.0f, "fixture values");

  Bytes wrong_magic = header(0x803, {2});
  wrong_magic.push_back(4);
  wrong_magic.push_back(0);
  expect(offset_of(images, wrong_magic) == 0, "label magic");
  expect(offset_of(labels, labels) == 0, "image magic");
  Bytes truncated(images.begin(), images.end() - 1);
  expect(offset_of(truncated, labels) == 16, "truncated pixels");
  Bytes short_header(images.begin(), images.begin() + 6);
  expect(offset_of(short_header, labels) == 4, "truncated header");
  Bytes three = header(0x801, {3});
  three.insert(three.end(), {1, 2, 3});
  expect(offset_of(images, three) == 4, "count mismatch");
  Bytes trailing = labels;
  trailing.push_back(9);
  expect(offset_of(images, trailing) == 10, "trailing bytes");

  const fs::path dir = env.work / "formats";
  fs::create_directories(dir);
  gzFile gz = gzopen((dir / "images.gz").c_str(), "wb");
  gzwrite(gz, images.data(), static_cast<unsigned>(images.size()));
  gzclose(gz);
  write_file(dir / "labels", labels);
  expect(data::load_idx(dir / "images.gz", dir / "labels").content_hash() == set.content_hash(), "gzip input");

  Rng rng(3);
  data::LabeledImageSet packed;
  packed.images = testing_util::random_tensor<float>({5, 1, 7, 9}, rng, 0, 1);
  packed.labels = {0, 3, 1, 2, 3};
  packed.num_classes = 4;
  data::save_packed(dir / "set.llds", packed);
  auto back = data::load_packed(dir / "set.llds");
  expect(back.images.shape() == packed.images.shape() &&
             std::memcmp(back.images.data().data(), packed.images.data().data(), packed.images.size() * 4) == 0 &&
             back.labels == packed.labels && back.num_classes == 4,
         "packed round trip");
  Bytes enc = data::encode_packed(packed);
  const std::size_t last_label = enc.size() - 2;
  Bytes cut(enc.begin(), enc.end() - 1);
  auto packed_offset = [&](const Bytes& b) -> long {
    try {
      data::decode_packed(b);
    } catch (const ParseError& e) {
      return static_cast<long>(e.offset());
    }
    return -1;
  };
  expect(packed_offset(cut) == static_cast<long>(last_label), "packed truncation offset");
  Bytes magic = enc;
  magic[3] = 'X';
  expect(packed_offset(magic) == 0, "packed magic");
  Bytes version = enc;
  version[4] = 9;
  expect(packed_offset(version) == 4, "packed version");
  Bytes longer = enc;
  longer.push_back(0);
  expect(packed_offset(longer) == static_cast<long>(enc.size()), "packed length");
  data::LabeledImageSet empty;
  empty.images = Tensor({0, 1, 7, 9});
  empty.num_classes = 1;
  expect(data::encode_packed(empty).size() == data::kPackedHeaderBytes, "empty container");

  std::string detail = "IDX fixture + 6 corrupted variants + gzip, LLDS round trip + 4 corrupted variants";
  if (!bad.empty()) {
    detail += "; wrong:";
    for (const auto& b : bad) detail += " " + b;
  }
  return {bad.empty(), detail};
}

struct EndToEnd {
  bool ran = false;
  std::string error;
  fs::path root, prep, sim, recon;
  double recon_seconds = 0;
};

std::string e2e_args() {
  return " -s run.verbose=false -s data.target_per_class=120 -s optics.sensor_h=64 -s optics.sensor_w=86"
         " -s optics.read_noise_sigma=0.01 -s recon.size=64 -s recon.depth=3 -s recon.base_channels=8"
         " -s recon.epochs=50 -s recon.batch_size=32 -s classifier.epochs=30 -s classifier.width_multiplier=0.25"
         " -s classifier.raw_h=32 -s classifier.raw_w=43";
}

// 7
Outcome end_to_end(const Env& env, EndToEnd& state) {
  const auto t0 = Clock::now();
  state.root = env.work / "end_to_end";
  fs::remove_all(state.root);
  fs::create_directories(state.root);
  state.prep = state.root / "prep";
  state.sim = state.root / "sim";
  state.recon = state.root / "recon";
  const std::string a = e2e_args();
  must(cli(env, "prepare --images " + env.images().string() + " --labels " + env.labels().string() + " -o " +
                    state.prep.string() + a,
           state.root / "prepare.log"),
       "prepare");
  must(cli(env, "simulate --prepared " + state.prep.string() + " -o " + state.sim.string() + a, state.root / "simulate.log"),
       "simulate");
  must(cli(env, "train-recon --prepared " + state.prep.string() + " --simulated " + state.sim.string() + " -o " +
                    state.recon.string() + a,
           state.root / "recon.log"),
       "train-recon");
  const fs::path rep = state.root / "report_recon";
  must(cli(env, "report -o " + rep.string() + a + " " + state.recon.string(), state.root / "report.log"), "report");
  const double secs = seconds_since(t0);
  state.ran = true;
  state.recon_seconds = secs;

  const auto prep = load_json(state.prep / "manifest.json")["metrics"];
  const auto m = load_json(state.recon / "manifest.json")["metrics"];
  const double test_mae = m["test_mae"].get<double>();
  const double mean_mae = m["mean_predictor_test_mae"].get<double>();
  const auto train_n = prep["train_count"].get<double>(), test_n = prep["test_count"].get<double>();
  bool grids = true;
  for (const char* split : {"train", "test"}) {
    const fs::path g = rep / (std::string("recon_recon_") + split + ".pgm");
    if (!fs::exists(g)) {
      grids = false;
      continue;
    }
    const auto img = report::decode_pgm(read_file(g));
    grids = grids && img.width == 3 * 64 + 2 * 4 && img.height == 4 * 64 + 3 * 4;
  }
  const bool ok = train_n >= 600 && test_n >= 60 && test_mae <= 0.5 * mean_mae && grids && secs <= 1800;
  return {ok, std::to_string(int(train_n)) + "/" + std::to_string(int(test_n)) + " images, test MAE " + sci(test_mae) +
                  " vs 0.5 x mean-image MAE " + sci(0.5 * mean_mae) + ", grids " + (grids ? "emitted" : "missing") +
                  ", " + sci(secs / 60) + " min (<= 30)"};
}

struct ClassifierRuns {
  std::vector<std::pair<std::string, fs::path>> runs;
};

// 8
Outcome classifier_routes(const Env& env, const EndToEnd& e2e, ClassifierRuns& runs) {
  if (!e2e.ran) return {false, "needs the end-to-end runs of criterion 7: " + e2e.error};
  const std::string a = e2e_args();
  std::map<std::string, double> acc;
  std::map<std::string, double> minutes;
  for (const std::string route : {"original", "raw", "reconstructed"}) {
    const auto t0 = Clock::now();
    const fs::path out = e2e.root / ("clf_" + route);
    must(cli(env, "train-clf --route " + route + " --prepared " + e2e.prep.string() + " --simulated " + e2e.sim.string() +
                      " --recon-run " + e2e.recon.string() + " -o " + out.string() + a,
             e2e.root / ("clf_" + route + ".log")),
         "train-clf " + route);
    minutes[route] = seconds_since(t0) / 60;
    runs.runs.emplace_back(route, out);
    acc[route] = load_json(out / "manifest.json")["metrics"]["test_accuracy"].get<double>();
  }
  const fs::path rep = e2e.root / "report";
  std::string args = "report -o " + rep.string() + a + " " + e2e.recon.string();
  for (const auto& [route, dir] : runs.runs) args += " " + dir.string();
  must(cli(env, args, e2e.root / "report_all.log"), "report");
  const auto csv = read_file(rep / "accuracy_summary.csv");
  const std::string text(csv.begin(), csv.end());
  bool rows = true;
  for (const char* r : {",original,", ",raw,", ",reconstructed,"}) rows = rows && text.find(r) != std::string::npos;
  const bool highest = acc["original"] > acc["raw"] && acc["original"] > acc["reconstructed"];
  const bool ok = acc["original"] >= 0.90 && rows && highest;
  return {ok, "test accuracy original " + sci(acc["original"]) + " (>= 0.90), raw " + sci(acc["raw"]) +
                  ", reconstructed " + sci(acc["reconstructed"]) + "; route CSV " + (rows ? "emitted" : "incomplete") +
                  "; original highest: " + (highest ? "yes" : "no") + "; 30 epochs each, " +
                  sci(minutes["original"]) + "/" + sci(minutes["raw"]) + "/" + sci(minutes["reconstructed"]) + " min"};
}

// 9
Outcome noise_statistics() {
  optics::OpticsConfig cfg;  // 125 x 170 sensor, sigma 0.01 per frame, 10 frames
  auto clean_cfg = cfg;
  clean_cfg.read_noise_sigma = 0;
  const auto clean = optics::build_transfer_operator(clean_cfg);
  const auto noisy = optics::build_transfer_operator(cfg);
  Rng rng(9);
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (std::uint64_t capture = 0; capture < 2; ++capture) {
    auto object = testing_util::random_tensor<float>({32, 32}, rng, 0.2, 1.0);
    const auto s0 = optics::render_capture(object, clean, 0);
    const auto s = optics::render_capture(object, noisy, 100 + capture);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s0[i] < 0.05f || s0[i] > 0.95f) continue;  // keep clear of the [0, 1] clip
      const double r = static_cast<double>(s[i]) - s0[i];
      sum += r;
      sq += r * r;
      ++n;
    }
  }
  const double mean = sum / double(n);
  const double var = sq / double(n) - mean * mean;
  const double target = cfg.read_noise_sigma * cfg.read_noise_sigma / double(cfg.frames_per_capture);
  const double rel = std::abs(var - target) / target;
  return {n >= 10000 && rel <= 0.15, "variance " + sci(var) + " vs sigma^2/10 = " + sci(target) + " (" +
                                         sci(100 * rel) + "% off, tol 15%) over " + std::to_string(n) + " pixels"};
}

// 10
Outcome confusion_identity(const ClassifierRuns& runs) {
  std::size_t checked = 0;
  std::vector<std::string> bad;
  auto check = [&](const nn::ConfusionMatrix& m, double reported, const std::string& where) {
    std::size_t trace = 0, total = 0;
    for (std::size_t i = 0; i < m.size(); ++i)
      for (std::size_t j = 0; j < m[i].size(); ++j) {
        total += m[i][j];
        if (i == j) trace += m[i][j];
      }
    ++checked;
    if (static_cast<double>(trace) / static_cast<double>(total) != reported) bad.push_back(where);
  };

  // every evaluation of an in-process training run
  Rng rng(10);
  data::LabeledImageSet train, test;
  for (auto* s : {&train, &test}) {
    const std::size_t count = s == &train ? 48 : 18;
    s->images = testing_util::random_tensor<float>({count, 1, 32, 32}, rng, 0, 1);
    for (std::size_t i = 0; i < count; ++i) {
      const int label = static_cast<int>(i % 6);
      s->labels.push_back(label);
      for (std::size_t x = 0; x < 32; ++x) s->images.at(i, 0, 4 * label, x) = 1.0f;
    }
    s->num_classes = 6;
  }
  nn::ClassifierConfig ccfg;
  ccfg.width_multiplier = 0.0625;
  auto net = nn::build_classifier<float>(ccfg);
  train::TrainPlan plan;
  plan.max_epochs = 3;
  plan.batch_size = 16;
  plan.shuffle_seed = 4;
  train::AdamState<float> adam;
  const auto res = train::train_classifier(net, train, test, plan, adam);
  for (std::size_t i = 0; i < res.records.size(); ++i) {
    check(res.confusions[i], *res.records[i].accuracy, "record " + std::to_string(i));
  }

  // final test evaluation of each route run
  for (const auto& [route, dir] : runs.runs) {
    const auto text = read_file(dir / "confusion.csv");
    const auto m = report::parse_confusion_csv(std::string(text.begin(), text.end()));
    check(m, load_json(dir / "manifest.json")["metrics"]["test_accuracy"].get<double>(), route);
  }
  std::string detail = std::to_string(checked) + " evaluations, trace/total == accuracy exactly";
  if (runs.runs.empty()) detail += " (route runs unavailable)";
  if (!bad.empty()) detail += "; mismatch at " + bad.front();
  return {bad.empty() && !runs.runs.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  Env env;
  env.data = LENSLEARN_DATA_DIR;
  std::string work = (fs::temp_directory_path() / "lenslearn_acceptance").string();
  bool strict = false;
  std::vector<int> only;
  app.add_option("--work", work, "scratch directory for pipeline runs");
  app.add_option("--data", env.data, "directory holding the MNIST IDX files");
  app.add_option("--only", only, "evaluate just these criteria");
  app.add_flag("--strict", strict, "exit 1 when any criterion fails");
  CLI11_PARSE(app, argc, argv);
  env.work = fs::absolute(work);
  fs::create_directories(env.work);

  EndToEnd e2e;
  ClassifierRuns runs;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"conv2d oracle equivalence", conv_oracle},
      {"gradient suite", gradient_suite},
      {"loss closed forms", loss_closed_forms},
      {"Adam trajectory", adam_trajectory},
      {"rerun determinism", [&] { return determinism(env); }},
      {"format fidelity", [&] { return formats(env); }},
      {"desk-scale end-to-end reconstruction", [&] { return end_to_end(env, e2e); }},
      {"classifier sanity and route comparison", [&] { return classifier_routes(env, e2e, runs); }},
      {"frame-averaged noise statistics", noise_statistics},
      {"confusion-matrix identity", [&] { return confusion_identity(runs); }},
  };
  std::size_t failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& ex) {
      o = {false, std::string("error: ") + ex.what()};
      if (id == 7) e2e.error = ex.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return strict && failed ? 1 : 0;
}
