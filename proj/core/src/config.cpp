#include "ppap/config.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace ppap {

using nlohmann::json;

void TrainConfig::validate() const {
    if (model.n_attributes < 1) throw std::invalid_argument("config: model.n_attributes >= 1");
    if (model.n_samples < 1) throw std::invalid_argument("config: model.n_samples >= 1");
    if (model.template_length < 1) throw std::invalid_argument("config: model.template_length >= 1");
    if (data.input_size % 8 != 0) throw std::invalid_argument("config: data.input_size must be a multiple of 8");
    if (train.batch_size < 1) throw std::invalid_argument("config: train.batch_size >= 1");
    if (!train.freeze_text_encoder)
        throw std::invalid_argument("config: the text encoder is always frozen");
    int prev = 0;
    for (int m : train.lr_milestones) {
        if (m <= prev) throw std::invalid_argument("config: lr milestones must be strictly increasing");
        if (m >= train.epochs)
            throw std::invalid_argument("config: lr milestones must lie before the last epoch");
        prev = m;
    }
    if (fusion.attention_layers < 1)
        throw std::invalid_argument("config: fusion.attention_layers >= 1");
}

void TrainConfig::apply_paper_scale() {
    data.input_size = 256;
    train.batch_size = 64;
    train.epochs = 210;
    train.lr_milestones = {170, 200};
    train.lr = 3e-4;
    train.weight_decay = 2.5e-5;
    train.max_steps = 0;
}

namespace {

template <typename T>
void get_to(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

TrainConfig TrainConfig::from_json_text(const std::string& text) {
    json j = json::parse(text);
    TrainConfig c;
    if (j.contains("model")) {
        const auto& m = j["model"];
        get_to(m, "n_attributes", c.model.n_attributes);
        get_to(m, "n_samples", c.model.n_samples);
        get_to(m, "template_length", c.model.template_length);
        get_to(m, "token_width", c.model.token_width);
        get_to(m, "embed_width", c.model.embed_width);
        get_to(m, "feature_channels", c.model.feature_channels);
        get_to(m, "head_channels", c.model.head_channels);
        get_to(m, "randomize_placement", c.model.randomize_placement);
        get_to(m, "sigma_cells", c.model.sigma_cells);
        get_to(m, "init_seed", c.model.init_seed);
    }
    if (j.contains("loss")) {
        const auto& l = j["loss"];
        get_to(l, "gamma", c.loss.gamma);
        get_to(l, "beta", c.loss.beta);
        get_to(l, "use_diversity", c.loss.use_diversity);
        get_to(l, "use_kl", c.loss.use_kl);
    }
    if (j.contains("fusion")) {
        const auto& f = j["fusion"];
        get_to(f, "strategy", c.fusion.strategy);
        get_to(f, "attention_layers", c.fusion.attention_layers);
    }
    if (j.contains("data")) {
        const auto& d = j["data"];
        get_to(d, "type", c.data.type);
        get_to(d, "path", c.data.path);
        get_to(d, "input_size", c.data.input_size);
        get_to(d, "image_size", c.data.image_size);
        get_to(d, "species", c.data.species);
        get_to(d, "n_per_species", c.data.n_per_species);
        get_to(d, "noise_level", c.data.noise_level);
        get_to(d, "crop_padding", c.data.crop_padding);
        get_to(d, "seed", c.data.seed);
    }
    if (j.contains("aug")) {
        const auto& a = j["aug"];
        get_to(a, "enabled", c.aug.enabled);
        get_to(a, "rotation_max_deg", c.aug.rotation_max_deg);
        get_to(a, "scale_lo", c.aug.scale_lo);
        get_to(a, "scale_hi", c.aug.scale_hi);
        get_to(a, "flip_prob", c.aug.flip_prob);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        get_to(t, "batch_size", c.train.batch_size);
        get_to(t, "epochs", c.train.epochs);
        get_to(t, "max_steps", c.train.max_steps);
        get_to(t, "lr", c.train.lr);
        get_to(t, "weight_decay", c.train.weight_decay);
        get_to(t, "lr_milestones", c.train.lr_milestones);
        get_to(t, "lr_drop", c.train.lr_drop);
        get_to(t, "seed", c.train.seed);
        get_to(t, "eval_interval", c.train.eval_interval);
        get_to(t, "freeze_text_encoder", c.train.freeze_text_encoder);
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        get_to(e, "alpha", c.eval.alpha);
        get_to(e, "kappa", c.eval.kappa);
        get_to(e, "stochastic_samples", c.eval.stochastic_samples);
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string TrainConfig::to_json_text() const {
    json j;
    j["model"] = {{"n_attributes", model.n_attributes},
                  {"n_samples", model.n_samples},
                  {"template_length", model.template_length},
                  {"token_width", model.token_width},
                  {"embed_width", model.embed_width},
                  {"feature_channels", model.feature_channels},
                  {"head_channels", model.head_channels},
                  {"randomize_placement", model.randomize_placement},
                  {"sigma_cells", model.sigma_cells},
                  {"init_seed", model.init_seed}};
    j["loss"] = {{"gamma", loss.gamma},
                 {"beta", loss.beta},
                 {"use_diversity", loss.use_diversity},
                 {"use_kl", loss.use_kl}};
    j["fusion"] = {{"strategy", fusion.strategy}, {"attention_layers", fusion.attention_layers}};
    j["data"] = {{"type", data.type},
                 {"path", data.path},
                 {"input_size", data.input_size},
                 {"image_size", data.image_size},
                 {"species", data.species},
                 {"n_per_species", data.n_per_species},
                 {"noise_level", data.noise_level},
                 {"crop_padding", data.crop_padding},
                 {"seed", data.seed}};
    j["aug"] = {{"enabled", aug.enabled},
                {"rotation_max_deg", aug.rotation_max_deg},
                {"scale_lo", aug.scale_lo},
                {"scale_hi", aug.scale_hi},
                {"flip_prob", aug.flip_prob}};
    j["train"] = {{"batch_size", train.batch_size},
                  {"epochs", train.epochs},
                  {"max_steps", train.max_steps},
                  {"lr", train.lr},
                  {"weight_decay", train.weight_decay},
                  {"lr_milestones", train.lr_milestones},
                  {"lr_drop", train.lr_drop},
                  {"seed", train.seed},
                  {"eval_interval", train.eval_interval},
                  {"freeze_text_encoder", train.freeze_text_encoder}};
    j["eval"] = {{"alpha", eval.alpha},
                 {"kappa", eval.kappa},
                 {"stochastic_samples", eval.stochastic_samples}};
    return j.dump(1);
}

double lr_for_epoch(const TrainConfig& cfg, int epoch) {
    double lr = cfg.train.lr;
    for (int m : cfg.train.lr_milestones)
        if (epoch >= m) lr *= cfg.train.lr_drop;
    return lr;
}

}  // namespace ppap
