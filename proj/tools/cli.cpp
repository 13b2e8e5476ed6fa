/*
 * Copyright (c) 2026, the Swintormer authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "swt/config.hpp"
#include "swt/cost.hpp"
#include "swt/gradcheck.hpp"
#include "swt/image.hpp"
#include "swt/metrics.hpp"
#include "swt/pipeline.hpp"

namespace swtcli {

namespace {

using namespace swt;

const char* kUsage = R"(usage: swintormer <command> [--flag value ...]

commands:
  deblur     --input IMG --output IMG [--weights F] [--prior F | --diffuse]
             [--tile 512] [--shift 220] [--attn-window 16] [--steps 50]
             [--sampler ddim|ddpm] [--eta 0] [--seed N] [--batch 1]
             [--threads N] [--denoiser F] [--model-width N] [--model-blocks a,b,..]
             [--model-refinement N] [--config FILE]
  prior      --input IMG --denoiser F --out F [--steps 50] [--sampler ddim|ddpm]
             [--eta 0] [--seed N] [--config FILE]
  train-toy  --blurry IMG --sharp IMG [--prior F] [--loss l1|perceptual]
             [--train-steps 500] [--lr 0.005] [--seed N] [--out-weights F]
             [--model-width N] [--model-blocks a,b,..] [--attn-window N]
             [--model-refinement N] [--config FILE]
  cost       [--height 1680] [--width 1120] [--tile 512] [--shift 220]
             [--batch 1] [--csv FILE] [--model-width N] [--model-blocks a,b,..]
             [--attn-window N] [--model-refinement N] [--model-in-channels N]
             [--config FILE]
  metrics    --ref IMG --test IMG [--bit-depth 8]
  gradcheck  [--suite ops|swda|model|all]

Config files hold the same keys as the flags, one key=value per line.
SWINTORMER_THREADS sets the default for --threads.
)";

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& m) : std::runtime_error(m) {}
};

bool is_boolean_key(const std::string& key) { return key == "diffuse"; }

// --key value and --key=value both accepted; the config file loads first,
// flags override.
RunConfig parse_flags(const std::vector<std::string>& args, std::size_t start,
                      const std::vector<std::string>& allowed) {
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string config_path;
    for (std::size_t i = start; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a.size() < 3 || a[0] != '-' || a[1] != '-') {
            throw UsageError("unexpected argument: " + a);
        }
        std::string key = a.substr(2);
        std::string value;
        const auto eq = key.find('=');
        if (eq != std::string::npos) {
            value = key.substr(eq + 1);
            key = key.substr(0, eq);
        } else if (is_boolean_key(key)) {
            value = "true";
        } else {
            if (i + 1 >= args.size()) throw UsageError("flag --" + key + " needs a value");
            value = args[++i];
        }
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw UsageError("unknown flag --" + key);
        }
        if (key == "config") {
            config_path = value;
        } else {
            pairs.emplace_back(key, value);
        }
    }
    RunConfig rc;
    if (!config_path.empty()) rc.load_file(config_path);
    for (const auto& [k, v] : pairs) rc.set(k, v);
    return rc;
}

std::vector<std::int64_t> parse_block_list(const std::string& text) {
    std::vector<std::int64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) throw ValueError("empty entry in block list '" + text + "'");
        out.push_back(std::stoll(item));
    }
    if (out.empty()) throw ValueError("empty block list");
    return out;
}

ModelConfig model_config_from(const RunConfig& rc, std::int64_t in_channels) {
    ModelConfig cfg;
    cfg.in_channels = rc.get_int("model-in-channels", in_channels);
    cfg.base_width = rc.get_int("model-width", 32);
    if (rc.has("model-blocks")) cfg.blocks = parse_block_list(rc.get("model-blocks"));
    cfg.window = rc.get_int("attn-window", 16);
    cfg.refinement_blocks = rc.get_int("model-refinement", 2);
    cfg.validate();
    return cfg;
}

int default_threads(const RunConfig& rc) {
    if (rc.has("threads")) return static_cast<int>(rc.get_int("threads", 1));
    if (const char* env = std::getenv("SWINTORMER_THREADS")) {
        try {
            return std::max(1, static_cast<int>(std::stoll(env)));
        } catch (const std::exception&) {
            throw ValueError("SWINTORMER_THREADS is not an integer");
        }
    }
    return 1;
}

// Copy loaded tensors into a freshly built store, checking names and shapes.
void adopt_weights(WeightStore& built, const WeightStore& loaded, const std::string& what) {
    if (built.size() != loaded.size()) {
        throw FormatError(what + ": weight file has " + std::to_string(loaded.size()) +
                          " entries, model needs " + std::to_string(built.size()));
    }
    for (const auto& e : built.entries()) {
        if (!loaded.contains(e.name)) {
            throw FormatError(what + ": weight file is missing '" + e.name + "'");
        }
        const Tensor& src = loaded.at(e.name);
        if (src.shape() != e.tensor.shape()) {
            throw FormatError(what + ": '" + e.name + "' has shape " + src.shape_str() +
                              ", model needs " + e.tensor.shape_str());
        }
    }
    for (auto& e : built.entries()) e.tensor = loaded.at(e.name);
}

Tensor load_prior_file(const std::string& path, std::int64_t h, std::int64_t w) {
    const WeightStore ws = load_weights(path);
    if (!ws.contains("z0")) throw FormatError("prior file " + path + " has no 'z0' entry");
    const Tensor& z0 = ws.at("z0");
    if (z0.rank() != 3 || z0.extent(0) != h || z0.extent(1) != w) {
        throw ShapeError("prior " + z0.shape_str() + " does not match image " +
                         std::to_string(h) + "x" + std::to_string(w));
    }
    return z0;
}

SamplerConfig sampler_from(const RunConfig& rc) {
    SamplerConfig sc;
    const std::string kind = rc.get("sampler", "ddim");
    if (kind == "ddim") {
        sc.kind = SamplerConfig::Kind::Ddim;
    } else if (kind == "ddpm") {
        sc.kind = SamplerConfig::Kind::Ddpm;
    } else {
        throw ValueError("unknown sampler '" + kind + "' (expected ddim or ddpm)");
    }
    sc.steps = rc.get_int("steps", 50);
    sc.eta = rc.get_double("eta", 0.0);
    return sc;
}

int cmd_deblur(const RunConfig& rc) {
    if (!rc.has("input") || !rc.has("output")) {
        throw UsageError("deblur needs --input and --output");
    }
    const ImageBuffer in_img = read_image(rc.get("input"));
    if (in_img.channels != 3) {
        throw ShapeError("deblur expects a 3-channel image, got " +
                         std::to_string(in_img.channels) + " channels");
    }
    const Tensor image = image_to_tensor(in_img);

    std::optional<Tensor> prior;
    if (rc.has("prior") && rc.get_flag("diffuse")) {
        throw UsageError("--prior and --diffuse are mutually exclusive");
    }
    const std::uint64_t seed = static_cast<std::uint64_t>(rc.get_int("seed", 0));
    if (rc.has("prior")) {
        prior = load_prior_file(rc.get("prior"), image.extent(0), image.extent(1));
    } else if (rc.get_flag("diffuse")) {
        Denoiser den = build_denoiser(DenoiserConfig{}, seed);
        if (rc.has("denoiser")) adopt_weights(den.weights, load_weights(rc.get("denoiser")), "denoiser");
        const DiffusionSchedule sched = default_schedule(rc.get_int("steps", 50));
        SamplerConfig sc = sampler_from(rc);
        sc.steps = std::min<std::int64_t>(sc.steps, sched.steps());
        prior = extract_prior(image, den, sched, sc, seed);
    }

    ModelConfig cfg = model_config_from(rc, prior ? 6 : 3);
    Model model = build_model(cfg, seed);
    if (rc.has("weights")) adopt_weights(model.weights, load_weights(rc.get("weights")), "model");

    DeblurJob job;
    job.image = image;
    job.prior = prior;
    job.tile = rc.get_int("tile", 512);
    job.stride = rc.get_int("shift", 220);
    job.batch = rc.get_int("batch", 1);
    job.threads = default_threads(rc);
    const Tensor out = deblur(model, job);
    write_image(tensor_to_image(out, in_img.bit_depth), rc.get("output"));
    std::cout << "deblurred " << image.extent(1) << "x" << image.extent(0) << " -> "
              << rc.get("output") << " (" << make_tile_grid(image.extent(0), image.extent(1),
                                                            job.tile, job.stride).num_tiles()
              << " tiles)\n";
    return kExitOk;
}

int cmd_prior(const RunConfig& rc) {
    if (!rc.has("input") || !rc.has("denoiser") || !rc.has("out")) {
        throw UsageError("prior needs --input, --denoiser and --out");
    }
    const ImageBuffer in_img = read_image(rc.get("input"));
    const Tensor image = image_to_tensor(in_img);
    Denoiser den = build_denoiser(DenoiserConfig{}, 0);
    adopt_weights(den.weights, load_weights(rc.get("denoiser")), "denoiser");
    const DiffusionSchedule sched = default_schedule(rc.get_int("steps", 50));
    SamplerConfig sc = sampler_from(rc);
    sc.steps = std::min<std::int64_t>(sc.steps, sched.steps());
    const std::uint64_t seed = static_cast<std::uint64_t>(rc.get_int("seed", 0));
    const Tensor z0 = extract_prior(image, den, sched, sc, seed);
    WeightStore ws;
    ws.add("z0", z0);
    save_weights(ws, rc.get("out"));
    std::cout << "prior " << z0.shape_str() << " -> " << rc.get("out") << "\n";
    return kExitOk;
}

int cmd_train_toy(const RunConfig& rc) {
    if (!rc.has("blurry") || !rc.has("sharp")) {
        throw UsageError("train-toy needs --blurry and --sharp");
    }
    const Tensor blurry = image_to_tensor(read_image(rc.get("blurry")));
    const Tensor sharp = image_to_tensor(read_image(rc.get("sharp")));
    TrainSample sample{blurry, sharp, std::nullopt};
    if (rc.has("prior")) {
        sample.prior = load_prior_file(rc.get("prior"), blurry.extent(0), blurry.extent(1));
    }
    ModelConfig cfg = model_config_from(rc, sample.prior ? 6 : 3);
    const std::uint64_t seed = static_cast<std::uint64_t>(rc.get_int("seed", 0));
    Model model = build_model(cfg, seed);

    TrainOptions opts;
    const std::string loss = rc.get("loss", "l1");
    if (loss == "l1") {
        opts.loss = LossKind::L1;
    } else if (loss == "perceptual") {
        opts.loss = LossKind::Perceptual;
    } else {
        throw ValueError("unknown loss '" + loss + "' (expected l1 or perceptual)");
    }
    opts.steps = rc.get_int("train-steps", 500);
    opts.lr = rc.get_double("lr", 5e-3);
    opts.seed = seed;
    const auto curve = train_toy(model, {sample}, opts);
    std::cout << "loss " << curve.front() << " -> " << curve.back() << " over "
              << curve.size() << " steps\n";
    if (rc.has("out-weights")) {
        save_weights(model.weights, rc.get("out-weights"));
        std::cout << "weights -> " << rc.get("out-weights") << "\n";
    }
    return kExitOk;
}

int cmd_cost(const RunConfig& rc) {
    ModelConfig cfg = model_config_from(rc, 6);
    const std::int64_t h = rc.get_int("height", 1680);
    const std::int64_t w = rc.get_int("width", 1120);
    const std::int64_t tile = rc.get_int("tile", 512);
    const std::int64_t stride = rc.get_int("shift", 220);
    const std::int64_t batch = rc.get_int("batch", 1);
    const CostReport r = estimate(cfg, h, w, tile, stride, 8, batch);
    const CostReport whole = estimate(cfg, h, w, std::max(h, w), std::max(h, w), 8, 1);

    auto gmacs = [](std::uint64_t m) { return static_cast<double>(m) / 1e9; };
    std::ostringstream os;
    os << "image:               " << w << " x " << h << "\n"
       << "tile / stride:       " << tile << " / " << stride << " -> " << r.tile_w << " x "
       << r.tile_h << " tiles\n"
       << "tiles:               " << r.tiles << "\n"
       << "params:              " << r.params << "\n"
       << "macs per tile:       " << r.macs_per_tile << " (" << gmacs(r.macs_per_tile) << " GMACs)\n"
       << "macs per iteration:  " << r.macs_per_iteration << " (" << gmacs(r.macs_per_iteration)
       << " GMACs, batch " << batch << ")\n"
       << "macs total:          " << r.macs_total << " (" << gmacs(r.macs_total) << " GMACs)\n"
       << "peak activations:    " << r.peak_activation_bytes << " bytes (tiled, f64)\n"
       << "whole-image peak:    " << whole.peak_activation_bytes << " bytes\n"
       << "note: " << r.notes << "\n";
    std::cout << os.str();
    if (rc.has("csv")) {
        std::ofstream csv(rc.get("csv"), std::ios::trunc);
        if (!csv) throw Error("cannot open csv file: " + rc.get("csv"));
        csv << "height,width,tile,stride,tiles,params,macs_per_tile,macs_per_iteration,"
               "macs_total,peak_activation_bytes,whole_image_peak_bytes\n"
            << h << "," << w << "," << tile << "," << stride << "," << r.tiles << "," << r.params
            << "," << r.macs_per_tile << "," << r.macs_per_iteration << "," << r.macs_total << ","
            << r.peak_activation_bytes << "," << whole.peak_activation_bytes << "\n";
    }
    return kExitOk;
}

int cmd_metrics(const RunConfig& rc) {
    if (!rc.has("ref") || !rc.has("test")) throw UsageError("metrics needs --ref and --test");
    const ImageBuffer ref_img = read_image(rc.get("ref"));
    const ImageBuffer test_img = read_image(rc.get("test"));
    const int bit_depth = static_cast<int>(rc.get_int("bit-depth", ref_img.bit_depth));
    const MetricReport r =
        compute_metrics(image_to_tensor(ref_img), image_to_tensor(test_img), bit_depth);
    if (std::isinf(r.psnr)) {
        std::cout << "PSNR: inf dB\n";
    } else {
        std::cout << "PSNR: " << r.psnr << " dB\n";
    }
    std::cout << "SSIM: " << r.ssim << "\n";
    std::cout << "MAE: " << r.mae << "\n";
    return kExitOk;
}

int cmd_gradcheck(const RunConfig& rc) {
    const std::string suite = rc.get("suite", "all");
    if (suite != "ops" && suite != "swda" && suite != "model" && suite != "all") {
        throw UsageError("unknown suite '" + suite + "' (expected ops, swda, model or all)");
    }
    bool all_ok = true;
    auto report = [&all_ok](const std::string& name, const GradCheckReport& r) {
        all_ok = all_ok && r.passed;
        std::cout << (r.passed ? "PASS" : "FAIL") << "  " << name << "  worst rel err "
                  << r.worst_rel_err << "\n";
    };
    std::mt19937_64 rng(7);
    if (suite == "ops" || suite == "all") {
        {
            const Tensor a = Tensor::randn({3, 4}, rng), b = Tensor::randn({4, 2}, rng);
            report("matmul", gradcheck(
                                 [](Graph& g, const std::vector<Var>& v) {
                                     return ops::mean_all(g, ops::matmul(g, v[0], v[1]));
                                 },
                                 {a, b}));
        }
        {
            const Tensor x = Tensor::randn({4, 4, 2}, rng), w = Tensor::randn({3, 3, 2}, rng);
            report("dwconv3x3", gradcheck(
                                    [](Graph& g, const std::vector<Var>& v) {
                                        return ops::mean_all(g, ops::dwconv3x3(g, v[0], v[1]));
                                    },
                                    {x, w}));
        }
        {
            const Tensor x = Tensor::randn({2, 5}, rng);
            report("softmax", gradcheck(
                                  [](Graph& g, const std::vector<Var>& v) {
                                      Var p = ops::softmax_last(g, v[0]);
                                      return ops::mean_all(g, ops::mul(g, p, p));
                                  },
                                  {x}));
        }
        {
            const Tensor x = Tensor::randn({3, 6}, rng);
            const Tensor gm = Tensor::randn({6}, rng), bt = Tensor::randn({6}, rng);
            report("layernorm", gradcheck(
                                    [](Graph& g, const std::vector<Var>& v) {
                                        return ops::mean_all(
                                            g, ops::abs(g, ops::layernorm_last(g, v[0], v[1], v[2])));
                                    },
                                    {x, gm, bt}));
        }
        {
            const Tensor x = Tensor::randn({3, 4}, rng);
            report("gelu", gradcheck(
                               [](Graph& g, const std::vector<Var>& v) {
                                   return ops::mean_all(g, ops::gelu(g, v[0]));
                               },
                               {x}));
        }
    }
    if (suite == "swda" || suite == "all") {
        BlockConfig bc;
        bc.channels = 4;
        bc.window = 4;
        bc.shift = 2;
        SwdaParams p = init_swda_params(bc, rng);
        std::vector<Tensor> leaves;
        std::vector<std::string> names;
        leaves.push_back(Tensor::randn({8, 8, 4}, rng));
        names.push_back("input");
        p.for_each([&](const char* n, Tensor& t) {
            leaves.push_back(t);
            names.push_back(n);
        });
        GradCheckOptions opts;
        opts.tolerance = 1e-5;
        auto fn = [bc](Graph& g, const std::vector<Var>& v) {
            SwdaParamVars pv;
            std::size_t i = 1;
            pv.ln1_gamma = v[i++]; pv.ln1_beta = v[i++];
            pv.qkv_pw_w = v[i++]; pv.qkv_pw_b = v[i++]; pv.qkv_dw_w = v[i++];
            pv.alpha = v[i++]; pv.bias_table = v[i++];
            pv.proj_w = v[i++]; pv.proj_b = v[i++];
            pv.ln2_gamma = v[i++]; pv.ln2_beta = v[i++];
            pv.ffn_in_w = v[i++]; pv.ffn_in_b = v[i++];
            pv.ffn_out_w = v[i++]; pv.ffn_out_b = v[i++];
            return ops::mean_all(g, ops::abs(g, swda_block(g, v[0], pv, bc)));
        };
        report("swda_block", gradcheck(fn, leaves, opts, names));
    }
    if (suite == "model" || suite == "all") {
        ModelConfig cfg;
        cfg.in_channels = 3;
        cfg.base_width = 4;
        cfg.blocks = {1, 1};
        cfg.window = 4;
        cfg.refinement_blocks = 1;
        const Model model = build_model(cfg, 11);
        std::vector<Tensor> leaves;
        std::vector<std::string> names;
        leaves.push_back(Tensor::randn({8, 8, 3}, rng));
        names.push_back("input");
        for (const auto& e : model.weights.entries()) {
            leaves.push_back(e.tensor);
            names.push_back(e.name);
        }
        GradCheckOptions opts;
        opts.tolerance = 1e-5;
        opts.max_elements_per_leaf = 4;  // spot-check; every leaf is touched
        auto fn = [&cfg, &names](Graph& g, const std::vector<Var>& v) {
            std::vector<std::pair<std::string, Var>> bound;
            for (std::size_t i = 1; i < v.size(); ++i) bound.emplace_back(names[i], v[i]);
            const BoundParams bp{std::move(bound)};
            return ops::mean_all(g, ops::abs(g, model_forward(g, cfg, bp, v[0])));
        };
        report("tiny_model", gradcheck(fn, leaves, opts, names));
    }
    std::cout << (all_ok ? "gradcheck suite passed\n" : "gradcheck suite FAILED\n");
    return all_ok ? kExitOk : kExitRuntime;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    if (args.empty()) {
        std::cerr << kUsage;
        return kExitUsage;
    }
    const std::string& cmd = args[0];
    try {
        if (cmd == "deblur") {
            return cmd_deblur(parse_flags(args, 1,
                {"input", "output", "weights", "denoiser", "tile", "shift", "attn-window",
                 "prior", "diffuse", "steps", "sampler", "eta", "seed", "batch", "threads",
                 "model-width", "model-blocks", "model-refinement", "config"}));
        }
        if (cmd == "prior") {
            return cmd_prior(parse_flags(args, 1,
                {"input", "denoiser", "steps", "sampler", "eta", "seed", "out", "config"}));
        }
        if (cmd == "train-toy") {
            return cmd_train_toy(parse_flags(args, 1,
                {"blurry", "sharp", "prior", "loss", "train-steps", "lr", "seed", "out-weights",
                 "model-width", "model-blocks", "attn-window", "model-refinement", "config"}));
        }
        if (cmd == "cost") {
            return cmd_cost(parse_flags(args, 1,
                {"height", "width", "tile", "shift", "batch", "csv", "model-width",
                 "model-blocks", "attn-window", "model-refinement", "model-in-channels",
                 "config"}));
        }
        if (cmd == "metrics") {
            return cmd_metrics(parse_flags(args, 1, {"ref", "test", "bit-depth", "config"}));
        }
        if (cmd == "gradcheck") {
            return cmd_gradcheck(parse_flags(args, 1, {"suite", "config"}));
        }
        if (cmd == "--help" || cmd == "help" || cmd == "-h") {
            std::cout << kUsage;
            return kExitOk;
        }
        std::cerr << "unknown command: " << cmd << "\n" << kUsage;
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n" << kUsage;
        return kExitUsage;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace swtcli
