#pragma once

#include <string>
#include <vector>

#include "stylepipe/rng.hpp"
#include "stylepipe/tensor.hpp"

namespace stylepipe {

// Pointwise color styles. Aside from quantize-4 these are affine maps, so
// they commute exactly with bilinear resampling.
enum class StyleKind { invert, grayscale, sepia, quantize4, hue_rotate_120 };

const std::vector<StyleKind>& all_styles();
std::string style_name(StyleKind s);
StyleKind style_from_name(const std::string& name);
// index into the embedding table; null id 0 is reserved
int style_label(StyleKind s);

// procedural 64x64 scene: gradient background plus 2-4 colored shapes
constexpr int64_t kSceneSize = 64;
Tensor gen_scene(uint64_t seed);  // [H0,W0,3] in [-1,1]

Tensor apply_style(const Tensor& img, StyleKind style);

enum class TrajectoryKind { zoom_in, zoom_out, slide };
std::string trajectory_kind_name(TrajectoryKind k);
TrajectoryKind trajectory_kind_from_name(const std::string& name);

struct CropRect {
    real cx, cy, w, h;  // center and size in source pixels
};

struct Trajectory {
    TrajectoryKind kind;
    std::vector<CropRect> rects;  // one per frame
};

// zoom scales 1.0 -> 1.5 across frames; slide moves the center linearly by
// up to a quarter of the image width; all rects stay inside the source
Trajectory sample_trajectory(TrajectoryKind kind, Rng& rng, int frames, int64_t src_h,
                             int64_t src_w);
void validate_trajectory(const Trajectory& traj, int64_t src_h, int64_t src_w);

enum class ResampleMode { bilinear, nearest };

Tensor crop_resample(const Tensor& img, const CropRect& rect, int64_t out_h, int64_t out_w,
                     ResampleMode mode = ResampleMode::bilinear);

struct ClipPair {
    Tensor context;  // [T,H,W,C]
    Tensor styled;   // same trajectory applied to the styled source
    StyleKind style = StyleKind::invert;
    int64_t source_id = 0;
    Trajectory trajectory;
    bool train_split = true;
};

ClipPair make_clip_pair(const Tensor& src, StyleKind style, const Trajectory& traj, int64_t out_h,
                        int64_t out_w, ResampleMode mode = ResampleMode::bilinear);

struct DatasetSpec {
    uint64_t seed = 0;
    int train_sources = 40;
    int val_sources = 50;
    std::vector<StyleKind> styles = all_styles();
    int frames = 8;
    int64_t clip_h = 16, clip_w = 16;

    int64_t total_sources() const { return train_sources + val_sources; }
};

struct Dataset {
    DatasetSpec spec;
    std::vector<ClipPair> pairs;

    std::vector<const ClipPair*> split(bool train) const;
};

// split is a pure function of the source index: the first train_sources
// sources are train, the rest validation
bool in_train_split(const DatasetSpec& spec, int64_t source_id);

Dataset generate_dataset(const DatasetSpec& spec);

void write_dataset(const Dataset& ds, const std::string& dir, const std::string& config_echo);
Dataset load_dataset(const std::string& dir);

}  // namespace stylepipe
