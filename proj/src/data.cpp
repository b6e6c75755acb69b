#include "stylepipe/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "stylepipe/tnsr_io.hpp"

namespace stylepipe {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<StyleKind>& all_styles() {
    static const std::vector<StyleKind> styles = {StyleKind::invert, StyleKind::grayscale,
                                                  StyleKind::sepia, StyleKind::quantize4,
                                                  StyleKind::hue_rotate_120};
    return styles;
}

std::string style_name(StyleKind s) {
    switch (s) {
        case StyleKind::invert: return "invert";
        case StyleKind::grayscale: return "grayscale";
        case StyleKind::sepia: return "sepia";
        case StyleKind::quantize4: return "quantize-4";
        case StyleKind::hue_rotate_120: return "hue-rotate-120";
    }
    throw ConfigError("bad style kind");
}

StyleKind style_from_name(const std::string& name) {
    for (StyleKind s : all_styles())
        if (style_name(s) == name) return s;
    throw ConfigError("unknown style: " + name);
}

int style_label(StyleKind s) { return static_cast<int>(s) + 1; }

// ---------------------------------------------------------------------------
// scene generation

namespace {

struct Rgb {
    real r, g, b;
};

Rgb hsv_to_rgb(real h, real s, real v) {
    h = h - std::floor(h);
    const real f6 = h * 6;
    const int i = static_cast<int>(f6) % 6;
    const real f = f6 - std::floor(f6);
    const real p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
    switch (i) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

void put_pixel(Tensor& img, int64_t y, int64_t x, const Rgb& c) {
    real* p = img.data() + (y * kSceneSize + x) * 3;
    p[0] = c.r * 2 - 1;
    p[1] = c.g * 2 - 1;
    p[2] = c.b * 2 - 1;
}

}  // namespace

Tensor gen_scene(uint64_t seed) {
    Rng rng(seed * 0x9e3779b97f4a7c15ULL + 0x1234567ULL);
    Tensor img = Tensor::zeros({kSceneSize, kSceneSize, 3});
    const int64_t n = kSceneSize;

    // gradient between two well-separated saturated hues
    const real h1 = static_cast<real>(rng.uniform());
    const real h2 = h1 + static_cast<real>(rng.uniform()) * real(0.5) + real(0.25);
    const Rgb c1 = hsv_to_rgb(h1, real(0.9), real(0.7) + real(0.3) * static_cast<real>(rng.uniform()));
    const Rgb c2 = hsv_to_rgb(h2, real(0.9), real(0.7) + real(0.3) * static_cast<real>(rng.uniform()));
    const real ang = static_cast<real>(rng.uniform()) * 2 * real(M_PI);
    const real ca = std::cos(ang), sa = std::sin(ang);
    for (int64_t y = 0; y < n; ++y)
        for (int64_t x = 0; x < n; ++x) {
            const real u = (ca * x / real(n - 1) + sa * y / real(n - 1) + 1) / 2;
            put_pixel(img, y, x,
                      {c1.r + (c2.r - c1.r) * u, c1.g + (c2.g - c1.g) * u,
                       c1.b + (c2.b - c1.b) * u});
        }

    const int64_t nshapes = 2 + rng.uniform_int(3);
    for (int64_t s = 0; s < nshapes; ++s) {
        const real hs = h1 + real(0.5) + real(0.17) * static_cast<real>(s) +
                        (static_cast<real>(rng.uniform()) - real(0.5)) * real(0.1);
        const Rgb col =
            hsv_to_rgb(hs, real(0.95), real(0.6) + real(0.4) * static_cast<real>(rng.uniform()));
        const int64_t kind = rng.uniform_int(3);
        const real cx = 10 + static_cast<real>(rng.uniform()) * (n - 20);
        const real cy = 10 + static_cast<real>(rng.uniform()) * (n - 20);
        const real r = 6 + static_cast<real>(rng.uniform()) * 10;
        for (int64_t y = 0; y < n; ++y)
            for (int64_t x = 0; x < n; ++x) {
                const real dx = x - cx, dy = y - cy;
                bool hit = false;
                if (kind == 0) hit = dx * dx + dy * dy < r * r;
                else if (kind == 1) hit = std::abs(dx) < r && std::abs(dy) < r * real(0.8);
                else hit = dy > -r / 2 && dy < r && std::abs(dx) < (r - dy) * real(0.7);
                if (hit) put_pixel(img, y, x, col);
            }
    }
    return img;
}

// ---------------------------------------------------------------------------
// styles

Tensor apply_style(const Tensor& img, StyleKind style) {
    Tensor out = Tensor::zeros(img.shape());
    const int64_t npix = img.numel() / 3;
    const real* in = img.data();
    real* o = out.data();
    for (int64_t p = 0; p < npix; ++p) {
        const real r = in[p * 3], g = in[p * 3 + 1], b = in[p * 3 + 2];
        const real ur = (r + 1) / 2, ug = (g + 1) / 2, ub = (b + 1) / 2;
        real vr, vg, vb;
        switch (style) {
            case StyleKind::invert:
                vr = 1 - ur, vg = 1 - ug, vb = 1 - ub;
                break;
            case StyleKind::grayscale: {
                const real y = real(0.299) * ur + real(0.587) * ug + real(0.114) * ub;
                vr = vg = vb = y;
                break;
            }
            case StyleKind::sepia: {
                const real y = real(0.299) * ur + real(0.587) * ug + real(0.114) * ub;
                vr = y;
                vg = y * real(0.8);
                vb = y * real(0.55);
                break;
            }
            case StyleKind::quantize4:
                vr = std::round(ur * 3) / 3;
                vg = std::round(ug * 3) / 3;
                vb = std::round(ub * 3) / 3;
                break;
            case StyleKind::hue_rotate_120:
                vr = ub, vg = ur, vb = ug;
                break;
            default:
                throw ConfigError("unknown style");
        }
        o[p * 3] = vr * 2 - 1;
        o[p * 3 + 1] = vg * 2 - 1;
        o[p * 3 + 2] = vb * 2 - 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// trajectories

std::string trajectory_kind_name(TrajectoryKind k) {
    switch (k) {
        case TrajectoryKind::zoom_in: return "zoom-in";
        case TrajectoryKind::zoom_out: return "zoom-out";
        case TrajectoryKind::slide: return "slide";
    }
    throw ConfigError("bad trajectory kind");
}

TrajectoryKind trajectory_kind_from_name(const std::string& name) {
    if (name == "zoom-in") return TrajectoryKind::zoom_in;
    if (name == "zoom-out") return TrajectoryKind::zoom_out;
    if (name == "slide") return TrajectoryKind::slide;
    throw ConfigError("unknown trajectory kind: " + name);
}

void validate_trajectory(const Trajectory& traj, int64_t src_h, int64_t src_w) {
    if (traj.rects.empty()) throw TrajectoryError("trajectory has no rects");
    const real eps = real(1e-9);
    const real aspect0 = traj.rects[0].w / traj.rects[0].h;
    for (const CropRect& r : traj.rects) {
        if (r.w <= 0 || r.h <= 0) throw TrajectoryError("degenerate crop rect");
        if (std::abs(r.w / r.h - aspect0) > real(1e-6))
            throw TrajectoryError("crop aspect drifts across frames");
        if (r.cx - r.w / 2 < -eps || r.cx + r.w / 2 > src_w + eps || r.cy - r.h / 2 < -eps ||
            r.cy + r.h / 2 > src_h + eps)
            throw TrajectoryError("crop rect out of bounds");
    }
}

Trajectory sample_trajectory(TrajectoryKind kind, Rng& rng, int frames, int64_t src_h,
                             int64_t src_w) {
    if (frames < 1) throw TrajectoryError("trajectory needs at least one frame");
    const real minside = static_cast<real>(std::min(src_h, src_w));
    if (minside < 8) throw TrajectoryError("source too small for augmentation");
    // base crop leaves room for both the zoom range and the slide span
    const real w0 = minside * (real(0.45) + real(0.25) * static_cast<real>(rng.uniform()));
    Trajectory traj;
    traj.kind = kind;
    traj.rects.reserve(static_cast<size_t>(frames));
    if (kind == TrajectoryKind::zoom_in || kind == TrajectoryKind::zoom_out) {
        const real cx = w0 / 2 + static_cast<real>(rng.uniform()) * (src_w - w0);
        const real cy = w0 / 2 + static_cast<real>(rng.uniform()) * (src_h - w0);
        for (int t = 0; t < frames; ++t) {
            const real f = frames == 1 ? real(0) : real(t) / real(frames - 1);
            const real s = 1 + real(0.5) * f;
            traj.rects.push_back({cx, cy, w0 / s, w0 / s});
        }
        if (kind == TrajectoryKind::zoom_out)
            std::reverse(traj.rects.begin(), traj.rects.end());
    } else {
        const real cx = w0 / 2 + static_cast<real>(rng.uniform()) * (src_w - w0);
        const real cy = w0 / 2 + static_cast<real>(rng.uniform()) * (src_h - w0);
        const real ang = static_cast<real>(rng.uniform()) * 2 * real(M_PI);
        const real dx = std::cos(ang), dy = std::sin(ang);
        real limit = real(0.25) * static_cast<real>(src_w);
        auto clamp_along = [&](real d, real c, real lo, real hi) {
            if (d > real(1e-9)) limit = std::min(limit, (hi - c) / d);
            else if (d < real(-1e-9)) limit = std::min(limit, (lo - c) / d);
        };
        clamp_along(dx, cx, w0 / 2, src_w - w0 / 2);
        clamp_along(dy, cy, w0 / 2, src_h - w0 / 2);
        const real dist = std::max(limit, real(0)) *
                          (real(0.5) + real(0.5) * static_cast<real>(rng.uniform()));
        for (int t = 0; t < frames; ++t) {
            const real f = frames == 1 ? real(0) : real(t) / real(frames - 1);
            traj.rects.push_back({cx + dx * dist * f, cy + dy * dist * f, w0, w0});
        }
    }
    validate_trajectory(traj, src_h, src_w);
    return traj;
}

// ---------------------------------------------------------------------------
// resampling

Tensor crop_resample(const Tensor& img, const CropRect& rect, int64_t out_h, int64_t out_w,
                     ResampleMode mode) {
    const int64_t H = img.extent(0), W = img.extent(1), C = img.extent(2);
    if (rect.cx - rect.w / 2 < real(-1e-9) || rect.cx + rect.w / 2 > W + real(1e-9) ||
        rect.cy - rect.h / 2 < real(-1e-9) || rect.cy + rect.h / 2 > H + real(1e-9))
        throw TrajectoryError("crop rect out of bounds");
    Tensor out = Tensor::zeros({out_h, out_w, C});
    const real x0 = rect.cx - rect.w / 2, y0 = rect.cy - rect.h / 2;
    auto clampi = [](int64_t v, int64_t hi) { return std::min(std::max(v, int64_t(0)), hi); };
    for (int64_t i = 0; i < out_h; ++i)
        for (int64_t j = 0; j < out_w; ++j) {
            const real sx = x0 + (j + real(0.5)) / out_w * rect.w - real(0.5);
            const real sy = y0 + (i + real(0.5)) / out_h * rect.h - real(0.5);
            real* dst = out.data() + (i * out_w + j) * C;
            if (mode == ResampleMode::nearest) {
                const int64_t xi = clampi(static_cast<int64_t>(std::llround(sx)), W - 1);
                const int64_t yi = clampi(static_cast<int64_t>(std::llround(sy)), H - 1);
                const real* src = img.data() + (yi * W + xi) * C;
                for (int64_t c = 0; c < C; ++c) dst[c] = src[c];
            } else {
                const int64_t xf = static_cast<int64_t>(std::floor(sx));
                const int64_t yf = static_cast<int64_t>(std::floor(sy));
                const real fx = sx - xf, fy = sy - yf;
                const int64_t x0i = clampi(xf, W - 1), x1i = clampi(xf + 1, W - 1);
                const int64_t y0i = clampi(yf, H - 1), y1i = clampi(yf + 1, H - 1);
                for (int64_t c = 0; c < C; ++c) {
                    const real v00 = img.data()[(y0i * W + x0i) * C + c];
                    const real v01 = img.data()[(y0i * W + x1i) * C + c];
                    const real v10 = img.data()[(y1i * W + x0i) * C + c];
                    const real v11 = img.data()[(y1i * W + x1i) * C + c];
                    dst[c] = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                             fy * ((1 - fx) * v10 + fx * v11);
                }
            }
        }
    return out;
}

ClipPair make_clip_pair(const Tensor& src, StyleKind style, const Trajectory& traj, int64_t out_h,
                        int64_t out_w, ResampleMode mode) {
    validate_trajectory(traj, src.extent(0), src.extent(1));
    const Tensor styled_src = apply_style(src, style);
    const int64_t T = static_cast<int64_t>(traj.rects.size());
    const int64_t C = src.extent(2);
    ClipPair pair;
    pair.style = style;
    pair.trajectory = traj;
    pair.context = Tensor::zeros({T, out_h, out_w, C});
    pair.styled = Tensor::zeros({T, out_h, out_w, C});
    const int64_t frame_n = out_h * out_w * C;
    for (int64_t t = 0; t < T; ++t) {
        Tensor cf = crop_resample(src, traj.rects[static_cast<size_t>(t)], out_h, out_w, mode);
        Tensor sf = crop_resample(styled_src, traj.rects[static_cast<size_t>(t)], out_h, out_w, mode);
        std::copy(cf.data(), cf.data() + frame_n, pair.context.data() + t * frame_n);
        std::copy(sf.data(), sf.data() + frame_n, pair.styled.data() + t * frame_n);
    }
    return pair;
}

// ---------------------------------------------------------------------------
// dataset

bool in_train_split(const DatasetSpec& spec, int64_t source_id) {
    return source_id < spec.train_sources;
}

std::vector<const ClipPair*> Dataset::split(bool train) const {
    std::vector<const ClipPair*> out;
    for (const ClipPair& p : pairs)
        if (p.train_split == train) out.push_back(&p);
    return out;
}

Dataset generate_dataset(const DatasetSpec& spec) {
    if (spec.styles.empty()) throw ConfigError("dataset needs at least one style");
    Dataset ds;
    ds.spec = spec;
    for (int64_t src_id = 0; src_id < spec.total_sources(); ++src_id) {
        const Tensor scene = gen_scene(spec.seed * 1000003ULL + static_cast<uint64_t>(src_id));
        Rng traj_rng(spec.seed * 7349ULL + static_cast<uint64_t>(src_id) * 31ULL + 17ULL);
        for (StyleKind style : spec.styles) {
            const auto kind = static_cast<TrajectoryKind>(traj_rng.uniform_int(3));
            Trajectory traj =
                sample_trajectory(kind, traj_rng, spec.frames, kSceneSize, kSceneSize);
            ClipPair pair = make_clip_pair(scene, style, traj, spec.clip_h, spec.clip_w);
            pair.source_id = src_id;
            pair.train_split = in_train_split(spec, src_id);
            ds.pairs.push_back(std::move(pair));
        }
    }
    return ds;
}

void write_dataset(const Dataset& ds, const std::string& dir, const std::string& config_echo) {
    fs::create_directories(fs::path(dir) / "clips");
    json manifest;
    manifest["format"] = "stylepipe-dataset-v1";
    manifest["config"] = json::parse(config_echo.empty() ? "{}" : config_echo);
    manifest["seed"] = ds.spec.seed;
    manifest["train_sources"] = ds.spec.train_sources;
    manifest["val_sources"] = ds.spec.val_sources;
    manifest["frames"] = ds.spec.frames;
    manifest["clip_h"] = ds.spec.clip_h;
    manifest["clip_w"] = ds.spec.clip_w;
    json styles = json::array();
    for (StyleKind s : ds.spec.styles) styles.push_back(style_name(s));
    manifest["styles"] = styles;
    json entries = json::array();
    for (const ClipPair& p : ds.pairs) {
        const std::string stem = "clips/src" + std::to_string(p.source_id) + "_" +
                                 style_name(p.style);
        json rects = json::array();
        for (const CropRect& r : p.trajectory.rects)
            rects.push_back({r.cx, r.cy, r.w, r.h});
        json e;
        e["source_id"] = p.source_id;
        e["style"] = style_name(p.style);
        e["train"] = p.train_split;
        e["trajectory"] = {{"kind", trajectory_kind_name(p.trajectory.kind)}, {"rects", rects}};
        e["context"] = stem + "_ctx.tnsr";
        e["styled"] = stem + "_sty.tnsr";
        entries.push_back(e);
        save_tnsr((fs::path(dir) / e["context"].get<std::string>()).string(), p.context);
        save_tnsr((fs::path(dir) / e["styled"].get<std::string>()).string(), p.styled);
    }
    manifest["entries"] = entries;
    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("cannot write manifest in " + dir);
    f << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("cannot open manifest in " + dir);
    json manifest = json::parse(f);
    if (manifest.value("format", "") != "stylepipe-dataset-v1")
        throw IoError("unrecognized dataset format in " + dir);
    Dataset ds;
    ds.spec.seed = manifest["seed"].get<uint64_t>();
    ds.spec.train_sources = manifest["train_sources"].get<int>();
    ds.spec.val_sources = manifest["val_sources"].get<int>();
    ds.spec.frames = manifest["frames"].get<int>();
    ds.spec.clip_h = manifest["clip_h"].get<int64_t>();
    ds.spec.clip_w = manifest["clip_w"].get<int64_t>();
    ds.spec.styles.clear();
    for (const auto& s : manifest["styles"]) ds.spec.styles.push_back(style_from_name(s));
    for (const auto& e : manifest["entries"]) {
        ClipPair p;
        p.source_id = e["source_id"].get<int64_t>();
        p.style = style_from_name(e["style"]);
        p.train_split = e["train"].get<bool>();
        p.trajectory.kind = trajectory_kind_from_name(e["trajectory"]["kind"].get<std::string>());
        for (const auto& r : e["trajectory"]["rects"])
            p.trajectory.rects.push_back(
                {r[0].get<real>(), r[1].get<real>(), r[2].get<real>(), r[3].get<real>()});
        p.context = load_tnsr((fs::path(dir) / e["context"].get<std::string>()).string());
        p.styled = load_tnsr((fs::path(dir) / e["styled"].get<std::string>()).string());
        ds.pairs.push_back(std::move(p));
    }
    return ds;
}

}  // namespace stylepipe
