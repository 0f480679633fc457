#include "paml/envs.hpp"

#include <cmath>
#include <fstream>

namespace paml::envs {

namespace {

// World window: x in [-half_w, half_w], y in [y_min, y_min + span], pivot at
// the origin. The span accommodates the longest renderable pole (4.5 m).
constexpr double kHalfWidth = 2.9;
constexpr double kYMin = -1.0;
constexpr double kSpan = 5.8;

constexpr double kCartHalfWidth = 0.45;
constexpr double kCartHeight = 0.3;
constexpr double kPoleHalfWidth = 0.11;
constexpr double kTrackY = -0.42;
constexpr double kTrackHalfThickness = 0.05;

double point_segment_dist(double px, double py, double ax, double ay, double bx, double by) {
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double cx = ax + t * dx, cy = ay + t * dy;
    return std::hypot(px - cx, py - cy);
}

}  // namespace

Matrix render_cartpole(const CartPoleParams& p, const Vector& state, Index size) {
    validate(EnvParams{p});
    if (state.size() != 4) throw std::invalid_argument("render_cartpole: state must be 4-d");
    if (size < 8) throw std::invalid_argument("render_cartpole: image too small");

    const double scale = static_cast<double>(size) / kSpan;  // px per meter
    const double cart_x = state[0];
    const double th = state[1];
    // Pole tip in world coordinates (y up); th = 0 points down.
    const double tip_x = cart_x + p.pendulum_length * std::sin(th);
    const double tip_y = -p.pendulum_length * std::cos(th);

    Matrix img = Matrix::Zero(size, size);
    const int ss = 3;  // supersamples per pixel axis
    for (Index r = 0; r < size; ++r) {
        for (Index c = 0; c < size; ++c) {
            double cover = 0.0;
            for (int i = 0; i < ss; ++i) {
                for (int j = 0; j < ss; ++j) {
                    const double px = static_cast<double>(c) + (i + 0.5) / ss;
                    const double py = static_cast<double>(r) + (j + 0.5) / ss;
                    const double wx = px / scale - kHalfWidth;
                    const double wy = (static_cast<double>(size) - py) / scale + kYMin;
                    bool lit = false;
                    // track
                    if (std::abs(wy - kTrackY) <= kTrackHalfThickness) lit = true;
                    // cart body
                    if (!lit && std::abs(wx - cart_x) <= kCartHalfWidth && wy <= 0.0 &&
                        wy >= -kCartHeight)
                        lit = true;
                    // pole
                    if (!lit && point_segment_dist(wx, wy, cart_x, 0.0, tip_x, tip_y) <=
                                    kPoleHalfWidth)
                        lit = true;
                    if (lit) cover += 1.0;
                }
            }
            img(r, c) = cover / (ss * ss);
        }
    }
    return img;
}

void write_pgm(const Matrix& image, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
    out << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
    for (Index r = 0; r < image.rows(); ++r)
        for (Index c = 0; c < image.cols(); ++c) {
            const double v = std::clamp(image(r, c), 0.0, 1.0);
            out.put(static_cast<char>(std::lround(v * 255.0)));
        }
}

}  // namespace paml::envs
