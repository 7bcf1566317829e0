#include "ppap/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "ppap/image_io.hpp"

namespace ppap {

namespace fs = std::filesystem;

Dataset make_dataset(const TrainConfig& cfg) {
    Dataset ds;
    if (cfg.data.type == "synthetic") {
        std::vector<SynthSpecies> species;
        for (const auto& name : cfg.data.species) {
            if (name == "quad-A") species.push_back(species_quad_a());
            else if (name == "quad-B") species.push_back(species_quad_b());
            else throw std::invalid_argument("unknown synthetic species: " + name);
        }
        ds.records = generate_synthetic(species, cfg.data.n_per_species, cfg.data.image_size,
                                        cfg.data.noise_level, cfg.data.seed);
        ds.vocab = default_synth_vocab();
        ds.skeleton = species.front().limbs;
    } else if (cfg.data.type == "coco") {
        fs::path ann(cfg.data.path);
        if (fs::is_directory(ann)) ann /= "annotations.json";
        CocoData coco = load_coco(ann.string());
        ds.records = std::move(coco.records);
        ds.skeleton = coco.skeleton;
        // flip pairs live in the vocab.json sidecar when one exists
        const fs::path vocab_file = ann.parent_path() / "vocab.json";
        if (fs::exists(vocab_file)) {
            ds.vocab = KeypointVocab::load_json(vocab_file.string());
            if (ds.vocab.names != coco.keypoint_names)
                throw std::invalid_argument(
                    "make_dataset: vocab.json names disagree with COCO categories");
        } else {
            ds.vocab = KeypointVocab::from_names(coco.keypoint_names, {});
        }
    } else {
        throw std::invalid_argument("unknown data.type: " + cfg.data.type);
    }
    return ds;
}

namespace {

struct PreparedInstance {
    Tensor image;
    std::vector<Keypoint> keypoints;  // crop pixels
    HeatmapTarget target_spatial;     // 2x feature grid
    HeatmapTarget target_pred;        // 4x feature grid
    bool any_visible = false;
};

PreparedInstance prepare_instance(const InstanceRecord& rec, const TrainConfig& cfg,
                                  const KeypointVocab& vocab, bool augment_now, RngStream* aug_rng) {
    CropResult crop = crop_and_resize(rec, cfg.data.input_size, cfg.data.crop_padding);
    PreparedInstance p;
    if (augment_now) {
        AugmentConfig ac;
        ac.rotation_max_deg = cfg.aug.rotation_max_deg;
        ac.scale_lo = cfg.aug.scale_lo;
        ac.scale_hi = cfg.aug.scale_hi;
        ac.flip_prob = cfg.aug.flip_prob;
        AugmentResult ar = augment(crop.image, crop.keypoints, vocab, ac, *aug_rng);
        p.image = std::move(ar.image);
        p.keypoints = std::move(ar.keypoints);
    } else {
        p.image = std::move(crop.image);
        p.keypoints = std::move(crop.keypoints);
    }
    const int in = cfg.data.input_size;
    const int grid = in / 8;
    const double sig_spatial = cfg.model.sigma_cells * (static_cast<double>(in) / (2 * grid));
    const double sig_pred = cfg.model.sigma_cells * (static_cast<double>(in) / (4 * grid));
    p.target_spatial = make_target_heatmap(p.keypoints, 2 * grid, 2 * grid, in, in, sig_spatial);
    p.target_pred = make_target_heatmap(p.keypoints, 4 * grid, 4 * grid, in, in, sig_pred);
    for (const auto& kp : p.keypoints) p.any_visible = p.any_visible || kp.visible();
    return p;
}

Var prompt_per_keypoint(const StepContext& ctx, const PpapModel& model) {
    return l2_normalize_rows_stable(
        mean_group_rows(ctx.mu, model.prompts.n_keypoints, model.prompts.n_attributes));
}

void write_epoch_log(std::ofstream& out, const EpochLog& log) {
    nlohmann::json j;
    j["epoch"] = log.epoch;
    j["lr"] = log.lr;
    j["pred"] = log.mean_loss.pred;
    j["spatial"] = log.mean_loss.spatial;
    j["feature"] = log.mean_loss.feature;
    j["prompt"] = log.mean_loss.prompt;
    j["total"] = log.mean_loss.total;
    out << j.dump() << "\n";
}

Tensor upscale_nearest(const Tensor& img, int factor) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    Tensor out({c, h * factor, w * factor});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h * factor; ++y)
            for (int x = 0; x < w * factor; ++x)
                out.at(ch, y, x) = img.at(ch, y / factor, x / factor);
    return out;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& data, const std::string& out_dir) {
    PpapModel model = PpapModel::build(cfg, data.vocab);
    return train_model(model, cfg, data, out_dir);
}

TrainResult train_model(PpapModel& model, const TrainConfig& cfg, const Dataset& data,
                        const std::string& out_dir) {
    cfg.validate();
    if (data.records.empty()) throw std::invalid_argument("train: empty dataset");
    if (data.vocab.size() != model.vocab.size())
        throw std::invalid_argument("train: vocabulary mismatch between dataset and model");
    if (cfg.aug.enabled && cfg.aug.flip_prob > 0.0 && data.vocab.flip_pairs.empty())
        throw std::invalid_argument(
            "train: aug.flip_prob > 0 but the vocabulary declares no flip pairs");
    fs::create_directories(out_dir);

    RngStream root(cfg.train.seed);
    RngStream shuffle_rng = root.fork(1);
    RngStream noise_rng = root.fork(2);
    RngStream aug_rng = root.fork(3);

    AdamW optimizer(0.9, 0.999, 1e-8, cfg.train.weight_decay);
    std::ofstream log_out(fs::path(out_dir) / "metrics.jsonl");

    TrainResult result;
    result.final_checkpoint = (fs::path(out_dir) / "final.ckpt").string();
    result.best_checkpoint = (fs::path(out_dir) / "best.ckpt").string();
    result.best_pck = -1.0;

    const int n = static_cast<int>(data.records.size());
    const int batch = std::min(cfg.train.batch_size, n);
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

    int step = 0;
    bool stop = false;
    int epoch = 0;
    for (; epoch < cfg.train.epochs && !stop; ++epoch) {
        const double lr = lr_for_epoch(cfg, epoch);
        // Fisher-Yates with the dedicated stream
        for (int i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);

        LossBreakdown epoch_mean;
        int batches_run = 0;
        for (int start = 0; start < n && !stop; start += batch) {
            if (cfg.train.max_steps > 0 && step >= cfg.train.max_steps) {
                stop = true;
                break;
            }
            const int end = std::min(start + batch, n);
            StepContext ctx = encode_step_context(model);
            Var e_prompt = prompt_per_keypoint(ctx, model);
            Var diversity = cfg.loss.use_diversity
                                ? diversity_loss(ctx.embeddings.agnostic,
                                                 model.prompts.n_keypoints,
                                                 model.prompts.n_attributes)
                                : Var::constant(Tensor::scalar(0.0));

            Var batch_total;
            LossBreakdown batch_mean;
            for (int bi = start; bi < end; ++bi) {
                const InstanceRecord& rec = data.records[static_cast<size_t>(order[bi])];
                PreparedInstance inst =
                    prepare_instance(rec, cfg, data.vocab, cfg.aug.enabled, &aug_rng);
                InstanceForward fw = model_forward(model, ctx, inst.image, &inst.target_spatial,
                                                   SampleMode::stochastic, &noise_rng);

                bool no_visible = false;
                Var l_pred = pred_loss(fw.predicted, inst.target_pred);
                Var l_spatial = spatial_loss(fw.fused, inst.target_spatial, &no_visible);
                if (no_visible)
                    std::fprintf(stderr,
                                 "warning: instance %ld has no visible keypoints after "
                                 "augmentation (step %d)\n",
                                 rec.id, step);
                Var l_feature =
                    inst.any_visible
                        ? feature_loss(fw.pixel_embed, model.grid_h, model.grid_w, e_prompt,
                                       inst.keypoints, 8.0, model.temperature)
                        : Var::constant(Tensor::scalar(0.0));
                Var l_prompt = diversity;
                if (cfg.loss.use_kl)
                    l_prompt = add(l_prompt, mean(kl_to_standard_normal(fw.dist)));

                LossBreakdown parts;
                Var total;
                try {
                    total = total_loss(l_pred, l_spatial, l_feature, l_prompt, cfg.loss.gamma,
                                       cfg.loss.beta, &parts);
                } catch (const std::runtime_error& e) {
                    throw std::runtime_error(std::string(e.what()) + " (step " +
                                             std::to_string(step) + ", instance " +
                                             std::to_string(rec.id) + ")");
                }
                batch_total = batch_total.defined() ? add(batch_total, total) : total;
                batch_mean.pred += parts.pred;
                batch_mean.spatial += parts.spatial;
                batch_mean.feature += parts.feature;
                batch_mean.prompt += parts.prompt;
                batch_mean.total += parts.total;
            }
            const double inv = 1.0 / (end - start);
            batch_total = scale(batch_total, inv);
            batch_mean.pred *= inv;
            batch_mean.spatial *= inv;
            batch_mean.feature *= inv;
            batch_mean.prompt *= inv;
            batch_mean.total *= inv;

            backward(batch_total);
            optimizer.step(model.params, lr);
            model.params.zero_grad();
            ++step;
            ++batches_run;

            epoch_mean.pred += batch_mean.pred;
            epoch_mean.spatial += batch_mean.spatial;
            epoch_mean.feature += batch_mean.feature;
            epoch_mean.prompt += batch_mean.prompt;
            epoch_mean.total += batch_mean.total;
        }
        if (batches_run > 0) {
            const double inv = 1.0 / batches_run;
            epoch_mean.pred *= inv;
            epoch_mean.spatial *= inv;
            epoch_mean.feature *= inv;
            epoch_mean.prompt *= inv;
            epoch_mean.total *= inv;
            epoch_mean.gamma = cfg.loss.gamma;
            epoch_mean.beta = cfg.loss.beta;
            EpochLog log{epoch, lr, epoch_mean};
            result.epochs.push_back(log);
            write_epoch_log(log_out, log);
        }

        model.check_frozen();

        const bool last = stop || epoch + 1 == cfg.train.epochs;
        if ((cfg.train.eval_interval > 0 && (epoch + 1) % cfg.train.eval_interval == 0) || last) {
            EvalResult ev = evaluate(model, data.records, cfg);
            if (ev.pck > result.best_pck) {
                result.best_pck = ev.pck;
                save_checkpoint(result.best_checkpoint, model, cfg, epoch, noise_rng.state());
            }
        }
    }
    result.steps_run = step;
    save_checkpoint(result.final_checkpoint, model, cfg, epoch, noise_rng.state());
    return result;
}

std::vector<DecodedPoint> predict_instance(const PpapModel& model, const InstanceRecord& rec,
                                           const TrainConfig& cfg) {
    CropResult crop = crop_and_resize(rec, cfg.data.input_size, cfg.data.crop_padding);
    StepContext ctx = encode_step_context(model);

    Tensor heat;
    const int rounds = std::max(0, cfg.eval.stochastic_samples);
    if (rounds == 0) {
        InstanceForward fw =
            model_forward(model, ctx, crop.image, nullptr, SampleMode::mean, nullptr);
        heat = fw.predicted.val();
    } else {
        RngStream rng(cfg.train.seed ^ (0x5851f42d4c957f2dull * static_cast<uint64_t>(rec.id)));
        for (int r = 0; r < rounds; ++r) {
            InstanceForward fw =
                model_forward(model, ctx, crop.image, nullptr, SampleMode::stochastic, &rng);
            if (heat.empty()) heat = fw.predicted.val();
            else
                for (int64_t i = 0; i < heat.numel(); ++i) heat[i] += fw.predicted.val()[i];
        }
        for (int64_t i = 0; i < heat.numel(); ++i) heat[i] /= rounds;
    }

    const auto decoded = decode_keypoints(heat, cfg.data.input_size, cfg.data.input_size);
    const Affine back = crop.to_crop.inverse();
    std::vector<DecodedPoint> out;
    out.reserve(decoded.size());
    for (const auto& d : decoded) {
        const Point p = back.apply({d.x, d.y});
        out.push_back({p.x, p.y});
    }
    return out;
}

EvalResult evaluate(const PpapModel& model, const std::vector<InstanceRecord>& records,
                    const TrainConfig& cfg) {
    std::vector<std::vector<DecodedPoint>> preds;
    std::vector<std::vector<Keypoint>> gts;
    std::vector<Rect> boxes;
    std::vector<double> oks_all, oks_medium, oks_large;
    const std::vector<double> kappas(static_cast<size_t>(model.vocab.size()), cfg.eval.kappa);

    for (const auto& rec : records) {
        std::vector<DecodedPoint> pred = predict_instance(model, rec, cfg);
        preds.push_back(pred);
        gts.push_back(rec.keypoints);
        boxes.push_back(rec.bbox);
        bool any = false;
        for (const auto& kp : rec.keypoints) any = any || kp.visible();
        if (!any) continue;
        const double v = oks(pred, rec.keypoints, rec.bbox.area(), kappas);
        oks_all.push_back(v);
        const double area = rec.bbox.area();
        if (area > 32.0 * 32.0 && area <= 96.0 * 96.0) oks_medium.push_back(v);
        else if (area > 96.0 * 96.0) oks_large.push_back(v);
    }

    EvalResult res;
    PckCounts counts = pck(preds, gts, boxes, cfg.eval.alpha);
    res.pck = counts.fraction;
    res.n_instances = static_cast<int>(records.size());
    res.n_visible_keypoints = counts.total_visible;
    res.per_keypoint_pck.resize(counts.correct_per_keypoint.size());
    for (size_t i = 0; i < res.per_keypoint_pck.size(); ++i)
        res.per_keypoint_pck[i] = counts.visible_per_keypoint[i] > 0
                                      ? static_cast<double>(counts.correct_per_keypoint[i]) /
                                            counts.visible_per_keypoint[i]
                                      : std::numeric_limits<double>::quiet_NaN();

    const ApResult ap = average_precision(oks_all);
    res.ap = ap.ap;
    res.ap50 = ap.ap50;
    res.ap75 = ap.ap75;
    res.ar = ap.ar;
    if (!oks_medium.empty() && !oks_large.empty()) {
        res.ap_medium = average_precision(oks_medium).ap;
        res.ap_large = average_precision(oks_large).ap;
    }
    return res;
}

std::string ZeroShotReport::to_json() const {
    nlohmann::json j;
    j["protocol"] = "zero-shot";
    j["train"] = {{"species", train_label},
                  {"eval", nlohmann::json::parse(train_species.to_json())}};
    j["test"] = {{"species", test_label}, {"eval", nlohmann::json::parse(test_species.to_json())}};
    return j.dump(1);
}

ZeroShotReport zero_shot_protocol(const TrainConfig& cfg, const Dataset& data,
                                  const std::vector<std::string>& train_species,
                                  const std::vector<std::string>& test_species,
                                  const std::string& out_dir) {
    std::set<std::string> train_set(train_species.begin(), train_species.end());
    for (const auto& s : test_species)
        if (train_set.count(s))
            throw std::invalid_argument("zero_shot_protocol: species lists overlap: " + s);

    Dataset train_data;
    train_data.vocab = data.vocab;
    train_data.skeleton = data.skeleton;
    std::vector<InstanceRecord> test_records;
    std::set<std::string> test_set(test_species.begin(), test_species.end());
    for (const auto& rec : data.records) {
        if (train_set.count(rec.species)) train_data.records.push_back(rec);
        else if (test_set.count(rec.species)) test_records.push_back(rec);
    }
    if (train_data.records.empty())
        throw std::invalid_argument("zero_shot_protocol: no instances for the train species");
    if (test_records.empty())
        throw std::invalid_argument("zero_shot_protocol: no instances for the test species");

    PpapModel model = PpapModel::build(cfg, data.vocab);
    train_model(model, cfg, train_data, out_dir);

    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
        return s;
    };
    ZeroShotReport report;
    report.train_label = join(train_species);
    report.test_label = join(test_species);
    report.train_species = evaluate(model, train_data.records, cfg);
    report.test_species = evaluate(model, test_records, cfg);

    std::ofstream out(fs::path(out_dir) / "zero_shot.json");
    out << report.to_json() << "\n";
    return report;
}

std::vector<std::string> plot_outputs(const PpapModel& model, const InstanceRecord& rec,
                                      const std::vector<std::pair<int, int>>& skeleton,
                                      const TrainConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    CropResult crop = crop_and_resize(rec, cfg.data.input_size, cfg.data.crop_padding);
    StepContext ctx = encode_step_context(model);
    RngStream rng(cfg.train.seed ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(rec.id)));
    InstanceForward fw =
        model_forward(model, ctx, crop.image, nullptr, SampleMode::stochastic, &rng);

    std::vector<std::string> files;
    const int k = model.vocab.size();
    const int h = model.grid_h, w = model.grid_w;

    // overlay: decoded skeleton on the crop
    Tensor overlay = crop.image;
    const auto decoded =
        decode_keypoints(fw.predicted.val(), cfg.data.input_size, cfg.data.input_size);
    const double bone[3] = {0.9, 0.9, 0.9};
    for (const auto& [a, b] : skeleton)
        if (a < k && b < k)
            draw_line(overlay, decoded[a].x, decoded[a].y, decoded[b].x, decoded[b].y, bone, 0.8);
    for (int i = 0; i < k; ++i) {
        const double hue = static_cast<double>(i) / std::max(1, k - 1);
        const double rgb[3] = {1.0 - hue, 0.2 + 0.6 * hue, hue};
        splat_gaussian(overlay, decoded[i].x, decoded[i].y, 1.6, rgb);
    }
    const std::string overlay_path = (fs::path(out_dir) / "overlay.ppm").string();
    write_ppm(overlay_path, overlay);
    files.push_back(overlay_path);

    auto write_map = [&](const Tensor& rows, int row, const std::string& name) {
        Tensor field({h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) field.at(y, x) = rows.at(row, y * w + x);
        const std::string path = (fs::path(out_dir) / name).string();
        write_ppm(path, upscale_nearest(colorize_heatmap(field), 8));
        files.push_back(path);
    };
    for (int i = 0; i < k; ++i) write_map(fw.fused.map.val(), i, "fused_k" + std::to_string(i) + ".ppm");
    for (size_t s = 0; s < fw.stack.maps.size(); ++s)
        for (int i = 0; i < k; ++i)
            write_map(fw.stack.maps[s].val(), i,
                      "sample_s" + std::to_string(s) + "_k" + std::to_string(i) + ".ppm");
    return files;
}

}  // namespace ppap
