#include "ppap/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "ppap/image_io.hpp"

namespace ppap {

namespace fs = std::filesystem;
using nlohmann::json;

Tensor instance_image(const InstanceRecord& rec) {
    if (!rec.image.empty()) return rec.image;
    if (rec.image_file.empty()) throw std::runtime_error("instance has neither pixels nor a file");
    return read_ppm(rec.image_file);
}

KeypointVocab default_synth_vocab() {
    return KeypointVocab::from_names(
        {"nose", "tail base", "left front paw", "right front paw", "back peak"}, {{2, 3}});
}

SynthSpecies species_quad_a() {
    SynthSpecies s;
    s.name = "quad-A";
    s.skeleton = {{0.05, 0.42}, {0.95, 0.40}, {0.28, 0.95}, {0.55, 0.92}, {0.50, 0.05}};
    s.marker_colors = {{1.0, 0.25, 0.2},
                       {0.2, 0.45, 1.0},
                       {0.25, 1.0, 0.35},
                       {1.0, 0.9, 0.2},
                       {0.95, 0.25, 0.95}};
    s.marker_radius = {2.4, 2.4, 2.4, 2.4, 2.4};
    s.limbs = {{0, 4}, {4, 1}, {4, 2}, {4, 3}};
    s.body_color = {0.45, 0.45, 0.5};
    s.limb_thickness = 1.4;
    return s;
}

SynthSpecies species_quad_b() {
    SynthSpecies s;
    s.name = "quad-B";
    s.skeleton = {{0.10, 0.20}, {0.92, 0.30}, {0.20, 0.98}, {0.72, 0.95}, {0.55, 0.02}};
    s.marker_colors = species_quad_a().marker_colors;  // identity cue shared across species
    s.marker_radius = {3.2, 3.2, 3.2, 3.2, 3.2};
    s.limbs = {{0, 4}, {4, 1}, {0, 2}, {1, 3}};
    s.body_color = {0.5, 0.38, 0.22};
    s.limb_thickness = 2.2;
    return s;
}

std::vector<InstanceRecord> generate_synthetic(const std::vector<SynthSpecies>& species,
                                               int n_per_species, int image_size,
                                               double noise_level, uint64_t seed) {
    if (n_per_species < 1) throw std::invalid_argument("generate_synthetic: n >= 1");
    if (species.empty()) throw std::invalid_argument("generate_synthetic: no species");
    const size_t k = species.front().skeleton.size();
    for (const auto& s : species) {
        if (s.skeleton.size() != k || s.marker_colors.size() != k || s.marker_radius.size() != k)
            throw std::invalid_argument("generate_synthetic: species keypoint counts differ");
    }

    RngStream rng(seed);
    std::vector<InstanceRecord> out;
    out.reserve(species.size() * static_cast<size_t>(n_per_species));
    long next_id = 1;
    const double margin = 4.0;

    for (const auto& sp : species) {
        const double max_r = *std::max_element(sp.marker_radius.begin(), sp.marker_radius.end());
        for (int n = 0; n < n_per_species; ++n) {
            // rejection-sample an affine placement that keeps every keypoint
            // inside the frame; deterministic given the stream
            std::vector<Keypoint> kps(k);
            Affine place;
            for (int attempt = 0; attempt < 200; ++attempt) {
                const double rot = rng.uniform(-0.45, 0.45);  // radians
                const double span = image_size * rng.uniform(0.45, 0.62);
                const double tx = image_size * rng.uniform(0.30, 0.70);
                const double ty = image_size * rng.uniform(0.30, 0.70);
                place = Affine::translation(-0.5, -0.5)
                            .then(Affine::scaling(span, span))
                            .then(Affine::rotation(rot))
                            .then(Affine::translation(tx, ty));
                bool ok = true;
                for (size_t i = 0; i < k; ++i) {
                    const Point p = place.apply({sp.skeleton[i].x, sp.skeleton[i].y});
                    kps[i] = {p.x, p.y, 2};
                    if (p.x < margin || p.y < margin || p.x > image_size - 1 - margin ||
                        p.y > image_size - 1 - margin)
                        ok = false;
                }
                if (ok) break;
            }

            Tensor img({3, image_size, image_size});
            if (noise_level > 0.0) {
                for (int64_t i = 0; i < img.numel(); ++i) img[i] = noise_level * rng.uniform();
            }
            double body[3] = {sp.body_color.r, sp.body_color.g, sp.body_color.b};
            for (const auto& [a, b] : sp.limbs)
                draw_line(img, kps[a].x, kps[a].y, kps[b].x, kps[b].y, body, sp.limb_thickness);
            for (size_t i = 0; i < k; ++i) {
                double rgb[3] = {sp.marker_colors[i].r, sp.marker_colors[i].g,
                                 sp.marker_colors[i].b};
                splat_gaussian(img, kps[i].x, kps[i].y, sp.marker_radius[i], rgb);
            }

            double min_x = 1e30, min_y = 1e30, max_x = -1e30, max_y = -1e30;
            for (const auto& p : kps) {
                min_x = std::min(min_x, p.x);
                min_y = std::min(min_y, p.y);
                max_x = std::max(max_x, p.x);
                max_y = std::max(max_y, p.y);
            }
            const double pad = max_r + 2.0;
            Rect bbox{std::max(0.0, min_x - pad), std::max(0.0, min_y - pad), 0, 0};
            bbox.w = std::min<double>(image_size - 1, max_x + pad) - bbox.x;
            bbox.h = std::min<double>(image_size - 1, max_y + pad) - bbox.y;

            InstanceRecord rec;
            rec.image = std::move(img);
            rec.bbox = bbox;
            rec.keypoints = kps;
            rec.species = sp.name;
            rec.id = next_id++;
            out.push_back(std::move(rec));
        }
    }
    return out;
}

namespace {

const json& require_field(const json& j, const char* field, const char* where) {
    if (!j.contains(field))
        throw std::runtime_error(std::string("coco: missing field '") + field + "' in " + where);
    return j.at(field);
}

}  // namespace

CocoData load_coco(const std::string& path, int expected_keypoints) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("coco: cannot open " + path);
    json j;
    in >> j;

    CocoData data;
    const json& cats = require_field(j, "categories", "document");
    std::map<int, std::string> cat_names;
    for (const auto& c : cats) {
        const int cid = require_field(c, "id", "category").get<int>();
        cat_names[cid] = require_field(c, "name", "category").get<std::string>();
        if (data.keypoint_names.empty()) {
            data.keypoint_names =
                require_field(c, "keypoints", "category").get<std::vector<std::string>>();
            if (c.contains("skeleton"))
                for (const auto& e : c["skeleton"])
                    data.skeleton.emplace_back(e[0].get<int>() - 1, e[1].get<int>() - 1);
        }
    }
    const int k = static_cast<int>(data.keypoint_names.size());
    if (expected_keypoints >= 0 && k != expected_keypoints)
        throw std::invalid_argument("coco: keypoint count does not match vocabulary");

    std::map<long, std::string> image_files;
    const fs::path base = fs::path(path).parent_path();
    for (const auto& im : require_field(j, "images", "document")) {
        const long iid = require_field(im, "id", "image").get<long>();
        image_files[iid] = (base / require_field(im, "file_name", "image").get<std::string>()).string();
    }

    for (const auto& a : require_field(j, "annotations", "document")) {
        InstanceRecord rec;
        rec.id = require_field(a, "id", "annotation").get<long>();
        const long iid = require_field(a, "image_id", "annotation").get<long>();
        const auto fit = image_files.find(iid);
        if (fit == image_files.end())
            throw std::runtime_error("coco: annotation references unknown image id");
        rec.image_file = fit->second;
        const auto& bb = require_field(a, "bbox", "annotation");
        rec.bbox = {bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(),
                    bb[3].get<double>()};
        const auto& kp = require_field(a, "keypoints", "annotation");
        if (static_cast<int>(kp.size()) != 3 * k)
            throw std::runtime_error("coco: keypoints array length is not 3*K");
        for (int i = 0; i < k; ++i)
            rec.keypoints.push_back({kp[3 * i].get<double>(), kp[3 * i + 1].get<double>(),
                                     kp[3 * i + 2].get<int>()});
        const int cid = require_field(a, "category_id", "annotation").get<int>();
        const auto cit = cat_names.find(cid);
        if (cit == cat_names.end())
            throw std::runtime_error("coco: annotation references unknown category id");
        rec.species = cit->second;
        data.records.push_back(std::move(rec));
    }
    return data;
}

void save_coco(const std::string& path, const std::vector<InstanceRecord>& records,
               const std::vector<std::string>& keypoint_names,
               const std::vector<std::pair<int, int>>& skeleton, int image_size) {
    json j;
    j["images"] = json::array();
    j["annotations"] = json::array();
    j["categories"] = json::array();

    std::map<std::string, int> cat_ids;
    for (const auto& r : records)
        if (!cat_ids.count(r.species)) {
            const int cid = static_cast<int>(cat_ids.size()) + 1;
            cat_ids[r.species] = cid;
        }
    for (const auto& [name, cid] : cat_ids) {
        json c;
        c["id"] = cid;
        c["name"] = name;
        c["keypoints"] = keypoint_names;
        json sk = json::array();
        for (const auto& [a, b] : skeleton) sk.push_back({a + 1, b + 1});
        c["skeleton"] = sk;
        j["categories"].push_back(c);
    }

    const fs::path base = fs::path(path).parent_path();
    for (const auto& r : records) {
        json im;
        im["id"] = r.id;
        const fs::path img(r.image_file);
        im["file_name"] = img.is_absolute() ? fs::relative(img, base).string() : r.image_file;
        im["width"] = image_size;
        im["height"] = image_size;
        j["images"].push_back(im);

        json a;
        a["id"] = r.id;
        a["image_id"] = r.id;
        a["category_id"] = cat_ids[r.species];
        a["bbox"] = {r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h};
        json kp = json::array();
        int nkp = 0;
        for (const auto& p : r.keypoints) {
            kp.push_back(p.x);
            kp.push_back(p.y);
            kp.push_back(p.v);
            if (p.v > 0) ++nkp;
        }
        a["keypoints"] = kp;
        a["num_keypoints"] = nkp;
        a["area"] = r.bbox.w * r.bbox.h;
        j["annotations"].push_back(a);
    }

    std::ofstream out(path);
    if (!out) throw std::runtime_error("coco: cannot write " + path);
    out << j.dump(1) << "\n";
}

void write_dataset(const std::string& out_dir, const std::vector<InstanceRecord>& records,
                   const KeypointVocab& vocab,
                   const std::vector<std::pair<int, int>>& skeleton, int image_size) {
    fs::create_directories(fs::path(out_dir) / "images");
    std::vector<InstanceRecord> with_files;
    with_files.reserve(records.size());
    for (const auto& r : records) {
        InstanceRecord copy = r;
        const std::string rel = "images/" + std::to_string(r.id) + ".ppm";
        copy.image_file = rel;
        write_ppm((fs::path(out_dir) / rel).string(), instance_image(r));
        with_files.push_back(std::move(copy));
    }
    save_coco((fs::path(out_dir) / "annotations.json").string(), with_files, vocab.names,
              skeleton, image_size);

    json v;
    v["names"] = vocab.names;
    json pairs = json::array();
    for (const auto& [a, b] : vocab.flip_pairs) pairs.push_back({a, b});
    v["flip_pairs"] = pairs;
    std::ofstream out(fs::path(out_dir) / "vocab.json");
    out << v.dump(1) << "\n";
}

CropResult crop_and_resize(const InstanceRecord& rec, int out_size, double padding) {
    if (rec.bbox.w <= 0.0 || rec.bbox.h <= 0.0)
        throw std::invalid_argument("crop_and_resize: degenerate bbox");
    const double side = std::max(rec.bbox.w, rec.bbox.h) * padding;
    const double cx = rec.bbox.x + rec.bbox.w / 2.0;
    const double cy = rec.bbox.y + rec.bbox.h / 2.0;
    const double s = out_size / side;

    CropResult res;
    res.to_crop = Affine::translation(-cx, -cy)
                      .then(Affine::scaling(s, s))
                      .then(Affine::translation(out_size / 2.0, out_size / 2.0));
    res.image = warp_affine(instance_image(rec), res.to_crop, out_size, out_size);
    res.keypoints.reserve(rec.keypoints.size());
    for (const auto& p : rec.keypoints) {
        const Point q = res.to_crop.apply({p.x, p.y});
        int v = p.v;
        if (q.x < 0 || q.y < 0 || q.x > out_size - 1 || q.y > out_size - 1) v = 0;
        res.keypoints.push_back({q.x, q.y, v});
    }
    return res;
}

AugmentResult augment(const Tensor& image, const std::vector<Keypoint>& keypoints,
                      const KeypointVocab& vocab, const AugmentConfig& cfg, RngStream& rng) {
    if (cfg.scale_lo <= 0.0 || cfg.scale_hi < cfg.scale_lo)
        throw std::invalid_argument("augment: scale range must be positive");
    if (cfg.flip_prob > 0.0 && vocab.flip_pairs.empty())
        throw std::invalid_argument("augment: flipping needs flip_pairs in the vocabulary");
    const int h = image.dim(1), w = image.dim(2);
    const double rot = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg) * M_PI / 180.0;
    const double sc = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    const bool flip = rng.uniform() < cfg.flip_prob;

    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    Affine a = Affine::identity();
    if (flip) a = Affine::hflip(w);
    a = a.then(Affine::translation(-cx, -cy))
            .then(Affine::rotation(rot))
            .then(Affine::scaling(sc, sc))
            .then(Affine::translation(cx, cy));

    AugmentResult res;
    res.transform = a;
    res.flipped = flip;
    res.image = warp_affine(image, a, h, w);
    res.keypoints.resize(keypoints.size());
    for (size_t i = 0; i < keypoints.size(); ++i) {
        const Point q = a.apply({keypoints[i].x, keypoints[i].y});
        int v = keypoints[i].v;
        if (q.x < 0 || q.y < 0 || q.x > w - 1 || q.y > h - 1) v = 0;
        res.keypoints[i] = {q.x, q.y, v};
    }
    if (flip)
        for (const auto& [l, r] : vocab.flip_pairs) std::swap(res.keypoints[l], res.keypoints[r]);
    return res;
}

Tensor warp_affine(const Tensor& image, const Affine& transform, int out_h, int out_w) {
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    const Affine inv = transform.inverse();
    Tensor out({c, out_h, out_w});
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const Point src = inv.apply({static_cast<double>(x), static_cast<double>(y)});
            const int x0 = static_cast<int>(std::floor(src.x));
            const int y0 = static_cast<int>(std::floor(src.y));
            const double fx = src.x - x0, fy = src.y - y0;
            for (int ch = 0; ch < c; ++ch) {
                auto tap = [&](int yy, int xx) -> double {
                    return (xx >= 0 && xx < w && yy >= 0 && yy < h) ? image.at(ch, yy, xx) : 0.0;
                };
                out.at(ch, y, x) = (1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                                   fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
            }
        }
    return out;
}

}  // namespace ppap
