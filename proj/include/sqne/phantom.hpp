#pragma once

// Parallel-beam tomography test problem: an ellipse phantom on an N x N
// pixel grid, an exact-intersection projection matrix, and the consistent
// sinogram b = A x_true.
//
// Geometry: unit pixels, grid centred at the origin, pixel (row, col) covers
// x in [-N/2 + col, -N/2 + col + 1], y in [N/2 - row - 1, N/2 - row].
// View k has angle theta_k = k pi / views; ray r of that view is the line
// <p, (cos theta, sin theta)> = s_r with s_r spread evenly over the
// diameter D = N sqrt(2) of the circumscribed circle,
// s_r = -D/2 + (r + 1/2) D / rays.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <fstream>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "sqne/linear_block.hpp"
#include "sqne/matrix.hpp"

namespace sqne {

struct Ellipse {
    double cx = 0.0, cy = 0.0;  // centre, normalized coordinates in [-1, 1]
    double a = 1.0, b = 1.0;    // semi-axes along the rotated x and y axes
    double angle_deg = 0.0;
    double intensity = 1.0;     // additive
};

/// Modified Shepp-Logan head phantom (Toft's contrast-enhanced intensities).
inline std::vector<Ellipse> shepp_logan_ellipses() {
    return {
        {0.0, 0.0, 0.69, 0.92, 0.0, 1.0},          {0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8},
        {0.22, 0.0, 0.11, 0.31, -18.0, -0.2},      {-0.22, 0.0, 0.16, 0.41, 18.0, -0.2},
        {0.0, 0.35, 0.21, 0.25, 0.0, 0.1},         {0.0, 0.1, 0.046, 0.046, 0.0, 0.1},
        {0.0, -0.1, 0.046, 0.046, 0.0, 0.1},       {-0.08, -0.605, 0.046, 0.023, 0.0, 0.1},
        {0.0, -0.606, 0.023, 0.023, 0.0, 0.1},     {0.06, -0.605, 0.023, 0.046, 0.0, 0.1},
    };
}

struct PhantomSpec {
    std::size_t grid = 63;
    std::vector<Ellipse> ellipses = shepp_logan_ellipses();
    std::size_t views = 16;
    std::size_t rays_per_view = 99;

    void validate() const {
        if (grid < 1)
            throw InvalidArgument("PhantomSpec: grid must be at least 1");
        if (views < 1 || rays_per_view < 1)
            throw InvalidArgument("PhantomSpec: need at least one view and one ray");
    }
};

/// Pixel value = sum of intensities of the ellipses containing the pixel
/// centre, clamped to [0, 1]. Row-major, row 0 at the top.
inline Vector rasterize_phantom(const PhantomSpec& spec, std::vector<std::string>* warnings = nullptr) {
    spec.validate();
    const std::size_t N = spec.grid;
    Vector img(N * N, 0.0);
    std::size_t clamped = 0;
    for (std::size_t row = 0; row < N; ++row) {
        const double v = 1.0 - (2.0 * static_cast<double>(row) + 1.0) / static_cast<double>(N);
        for (std::size_t col = 0; col < N; ++col) {
            const double u = -1.0 + (2.0 * static_cast<double>(col) + 1.0) / static_cast<double>(N);
            double value = 0.0;
            for (const auto& e : spec.ellipses) {
                const double phi = e.angle_deg * std::numbers::pi / 180.0;
                const double du = u - e.cx, dv = v - e.cy;
                const double ru = du * std::cos(phi) + dv * std::sin(phi);
                const double rv = -du * std::sin(phi) + dv * std::cos(phi);
                if ((ru / e.a) * (ru / e.a) + (rv / e.b) * (rv / e.b) <= 1.0)
                    value += e.intensity;
            }
            if (value < 0.0 || value > 1.0) {
                ++clamped;
                value = std::clamp(value, 0.0, 1.0);
            }
            img[row * N + col] = value;
        }
    }
    if (clamped && warnings)
        warnings->push_back(fmt::format("rasterize_phantom: {} pixel values clamped to [0,1]", clamped));
    return img;
}

struct TomographyProblem {
    PhantomSpec spec;
    CsrMatrix A;
    Vector b;
    Vector x_true;
    std::vector<std::size_t> row_view;  // view index of each retained row
    std::vector<double> row_offset;     // signed ray offset s of each retained row
    std::vector<double> angles;         // radians, one per view
    std::vector<std::string> warnings;
};

struct RaySegment {
    std::size_t pixel;
    double length;
};

/// Exact intersection lengths of the line <p, (cos theta, sin theta)> = s
/// with the pixels of an N x N grid (Siddon-style traversal).
inline std::vector<RaySegment> trace_ray(std::size_t N, double theta, double s) {
    const double half = 0.5 * static_cast<double>(N);
    const double nx = std::cos(theta), ny = std::sin(theta);
    const double dx = -ny, dy = nx;  // unit direction
    const double px = s * nx, py = s * ny;
    constexpr double tiny = 1e-12;

    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    auto clip = [&](double p, double d) {
        if (std::abs(d) < tiny) {
            if (p <= -half || p >= half) {
                tmin = 1.0;
                tmax = 0.0;
            }
            return;
        }
        double t0 = (-half - p) / d, t1 = (half - p) / d;
        if (t0 > t1)
            std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
    };
    clip(px, dx);
    clip(py, dy);
    if (!(tmax - tmin > tiny))
        return {};

    std::vector<double> ts{tmin, tmax};
    auto crossings = [&](double p, double d) {
        if (std::abs(d) < tiny)
            return;
        for (std::size_t i = 0; i <= N; ++i) {
            const double t = (-half + static_cast<double>(i) - p) / d;
            if (t > tmin && t < tmax)
                ts.push_back(t);
        }
    };
    crossings(px, dx);
    crossings(py, dy);
    std::sort(ts.begin(), ts.end());

    std::vector<RaySegment> segs;
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        const double len = ts[k + 1] - ts[k];
        if (len <= tiny)
            continue;
        const double tm = 0.5 * (ts[k] + ts[k + 1]);
        const double x = px + tm * dx, y = py + tm * dy;
        const auto col = static_cast<std::size_t>(std::clamp(std::floor(x + half), 0.0, static_cast<double>(N - 1)));
        const auto row = static_cast<std::size_t>(std::clamp(std::floor(half - y), 0.0, static_cast<double>(N - 1)));
        segs.push_back({row * N + col, len});
    }
    return segs;
}

/// Chord length of a ray through the grid square (0 if it misses).
inline double chord_length(std::size_t N, double theta, double s) {
    double total = 0.0;
    for (const auto& seg : trace_ray(N, theta, s))
        total += seg.length;
    return total;
}

inline double ray_offset(const PhantomSpec& spec, std::size_t r) {
    const double D = static_cast<double>(spec.grid) * std::numbers::sqrt2;
    return -0.5 * D + (static_cast<double>(r) + 0.5) * D / static_cast<double>(spec.rays_per_view);
}

/// Projection matrix (rows missing the grid dropped), phantom and sinogram.
inline TomographyProblem build_projection_matrix(const PhantomSpec& spec) {
    spec.validate();
    TomographyProblem P;
    P.spec = spec;
    P.x_true = rasterize_phantom(spec, &P.warnings);
    const std::size_t N = spec.grid;

    std::vector<Triplet> entries;
    std::size_t row = 0;
    for (std::size_t v = 0; v < spec.views; ++v) {
        const double theta = static_cast<double>(v) * std::numbers::pi / static_cast<double>(spec.views);
        P.angles.push_back(theta);
        for (std::size_t r = 0; r < spec.rays_per_view; ++r) {
            const double s = ray_offset(spec, r);
            const auto segs = trace_ray(N, theta, s);
            if (segs.empty())
                continue;
            for (const auto& seg : segs)
                entries.push_back({row, seg.pixel, seg.length});
            P.row_view.push_back(v);
            P.row_offset.push_back(s);
            ++row;
        }
    }
    P.A = CsrMatrix::from_triplets(row, N * N, std::move(entries));
    P.b = multiply(P.A, P.x_true);
    return P;
}

/// One block per view with Cimmino weights and residual-minimizing lambda.
inline std::shared_ptr<const LinearBlockProblem<CsrMatrix>> block_by_view(const TomographyProblem& tomo) {
    std::vector<std::vector<std::size_t>> blocks(tomo.spec.views);
    for (std::size_t i = 0; i < tomo.row_view.size(); ++i)
        blocks.at(tomo.row_view[i]).push_back(i);
    for (std::size_t v = 0; v < blocks.size(); ++v)
        if (blocks[v].empty())
            throw InvalidArgument(fmt::format("block_by_view: view {} has no rays through the grid", v));
    return std::make_shared<const LinearBlockProblem<CsrMatrix>>(
        make_cimmino_problem(tomo.A, tomo.b, std::move(blocks), ResidualMinimizing{}, tomo.x_true));
}

/// Writes A.coo, x_true.txt, b.txt and geometry.txt into `dir`.
inline void write_tomography(const std::filesystem::path& dir, const TomographyProblem& tomo) {
    std::filesystem::create_directories(dir);
    write_coordinate_file((dir / "A.coo").string(), tomo.A);
    write_vector_file((dir / "x_true.txt").string(), tomo.x_true);
    write_vector_file((dir / "b.txt").string(), tomo.b);
    std::ofstream g(dir / "geometry.txt", std::ios::binary);
    g << "grid = " << tomo.spec.grid << "\n";
    g << "views = " << tomo.spec.views << "\n";
    g << "rays_per_view = " << tomo.spec.rays_per_view << "\n";
    g << "rows = " << tomo.A.rows() << "\n";
    g << "cols = " << tomo.A.cols() << "\n";
    g << "ray_spacing = diameter/rays, centred\n";
    g << "angles =";
    for (double a : tomo.angles)
        g << fmt::format(" {:.17g}", a);
    g << "\n";
    g << "row_view =";
    for (std::size_t v : tomo.row_view)
        g << " " << v;
    g << "\n";
}

}  // namespace sqne
