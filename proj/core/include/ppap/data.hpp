#pragma once

#include <string>
#include <vector>

#include "ppap/geometry.hpp"
#include "ppap/prompt_bank.hpp"
#include "ppap/rng.hpp"
#include "ppap/tensor.hpp"

namespace ppap {

/// One animal instance. Either `image` holds pixels directly (in-memory
/// synthetic data) or `image_file` names a PPM on disk.
struct InstanceRecord {
    Tensor image;            // (3, H, W) or empty
    std::string image_file;
    Rect bbox;
    std::vector<Keypoint> keypoints;  // v in {0,1,2}
    std::string species;
    long id = 0;
};

Tensor instance_image(const InstanceRecord& rec);

struct Color {
    double r = 0, g = 0, b = 0;
};

/// Canonical stick-figure species: normalized skeleton in [0,1]^2, distinct
/// per-keypoint marker colors, limb connectivity for rendering.
struct SynthSpecies {
    std::string name;
    std::vector<Point> skeleton;
    std::vector<Color> marker_colors;
    std::vector<double> marker_radius;
    std::vector<std::pair<int, int>> limbs;
    Color body_color;
    double limb_thickness = 1.5;
};

/// The two built-in species share keypoint names and marker colors but differ
/// in proportions, body color, and marker sizes.
SynthSpecies species_quad_a();
SynthSpecies species_quad_b();
KeypointVocab default_synth_vocab();

std::vector<InstanceRecord> generate_synthetic(const std::vector<SynthSpecies>& species,
                                               int n_per_species, int image_size,
                                               double noise_level, uint64_t seed);

/// COCO keypoint annotations. Skeleton edges are stored 1-based on disk.
struct CocoData {
    std::vector<InstanceRecord> records;
    std::vector<std::string> keypoint_names;
    std::vector<std::pair<int, int>> skeleton;  // 0-based in memory
};

CocoData load_coco(const std::string& path, int expected_keypoints = -1);
void save_coco(const std::string& path, const std::vector<InstanceRecord>& records,
               const std::vector<std::string>& keypoint_names,
               const std::vector<std::pair<int, int>>& skeleton, int image_size);

/// Writes PPM images, a COCO annotations.json, and a vocab.json sidecar
/// (names + flip_pairs) into out_dir.
void write_dataset(const std::string& out_dir, const std::vector<InstanceRecord>& records,
                   const KeypointVocab& vocab,
                   const std::vector<std::pair<int, int>>& skeleton, int image_size);

struct CropResult {
    Tensor image;                     // (3, out, out)
    std::vector<Keypoint> keypoints;  // in crop pixels
    Affine to_crop;                   // original -> crop coordinates
};

/// Square crop of the padded bbox resized to out_size; keypoints follow the
/// same affine, visibility dropped when mapped out of frame.
CropResult crop_and_resize(const InstanceRecord& rec, int out_size, double padding = 1.25);

struct AugmentConfig {
    double rotation_max_deg = 40.0;
    double scale_lo = 0.5;
    double scale_hi = 1.5;
    double flip_prob = 0.5;
};

struct AugmentResult {
    Tensor image;
    std::vector<Keypoint> keypoints;
    Affine transform;
    bool flipped = false;
};

AugmentResult augment(const Tensor& image, const std::vector<Keypoint>& keypoints,
                      const KeypointVocab& vocab, const AugmentConfig& cfg, RngStream& rng);

/// Bilinear warp with zero fill outside the source.
Tensor warp_affine(const Tensor& image, const Affine& transform, int out_h, int out_w);

}  // namespace ppap
