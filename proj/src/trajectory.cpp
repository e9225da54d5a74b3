#include <array>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "kinfit/error.hpp"
#include "kinfit/integrator.hpp"

namespace kinfit {

Trajectory::Trajectory(std::size_t dimension, std::vector<TrajectorySegment> segments, StepSchedule schedule)
    : dimension_(dimension), segments_(std::move(segments)), schedule_(std::move(schedule)) {}

std::size_t Trajectory::accepted_points() const {
    std::size_t n = 0;
    for (const auto& s : segments_) n += s.times.size();
    return n;
}

double Trajectory::start_time() const {
    if (segments_.empty()) throw DomainError("empty trajectory");
    return segments_.front().times.front();
}

double Trajectory::end_time() const {
    if (segments_.empty()) throw DomainError("empty trajectory");
    return segments_.back().times.back();
}

namespace {

// Quintic Hermite through (y, y', y'') at both ends of [ta, tb].
Vector hermite5(const TrajectorySegment& seg, std::size_t i, double t) {
    const double ta = seg.times[i];
    const double h = seg.times[i + 1] - ta;
    const double s = (t - ta) / h;
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
    const double h00 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
    const double h10 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    const double h20 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
    const double h01 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
    const double h11 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    const double h21 = 0.5 * (s3 - 2.0 * s4 + s5);
    return h00 * seg.states[i] + (h10 * h) * seg.derivatives[i] + (h20 * h * h) * seg.second_derivatives[i] +
           h01 * seg.states[i + 1] + (h11 * h) * seg.derivatives[i + 1] +
           (h21 * h * h) * seg.second_derivatives[i + 1];
}

}  // namespace

Vector Trajectory::interpolate(double t, Side side) const {
    if (segments_.empty()) throw DomainError("empty trajectory");
    const double t0 = start_time();
    const double t1 = end_time();
    const double slack = 1e-13 * std::max({1.0, std::abs(t0), std::abs(t1)});
    if (!(t >= t0 - slack && t <= t1 + slack)) throw DomainError("time outside the trajectory span");
    t = std::clamp(t, t0, t1);

    std::size_t s = 0;
    if (side == Side::right) {
        s = segments_.size() - 1;
        while (s > 0 && segments_[s].times.front() > t) --s;
    } else {
        while (s + 1 < segments_.size() && segments_[s].times.back() < t) ++s;
    }
    const TrajectorySegment& seg = segments_[s];
    auto it = std::lower_bound(seg.times.begin(), seg.times.end(), t);
    if (it == seg.times.end()) return seg.states.back();
    const auto k = static_cast<std::size_t>(it - seg.times.begin());
    if (*it == t) return seg.states[k];
    if (k == 0) return seg.states.front();
    return hermite5(seg, k - 1, t);
}

Vector Trajectory::abs_max(std::size_t leading) const {
    const auto n = static_cast<Eigen::Index>(leading == 0 ? dimension_ : std::min(leading, dimension_));
    Vector m = Vector::Zero(n);
    constexpr int samples = 16;
    std::array<Vector, samples + 1> v;
    for (const auto& seg : segments_) {
        for (const auto& z : seg.states) m = m.cwiseMax(z.head(n).cwiseAbs());
        for (std::size_t i = 0; i + 1 < seg.times.size(); ++i) {
            const double ta = seg.times[i], h = seg.times[i + 1] - ta;
            for (int j = 0; j <= samples; ++j) v[j] = hermite5(seg, i, ta + h * j / samples).head(n).cwiseAbs();
            for (Eigen::Index c = 0; c < n; ++c) {
                int best = 0;
                for (int j = 1; j <= samples; ++j)
                    if (v[j][c] > v[best][c]) best = j;
                m[c] = std::max(m[c], v[best][c]);
                if (best == 0 || best == samples) continue;
                // parabola through the neighbours, then evaluate the interpolant at its vertex
                const double a = v[best - 1][c], b = v[best][c], d = v[best + 1][c];
                const double den = a - 2.0 * b + d;
                if (!(den < 0.0)) continue;
                const double off = 0.5 * (a - d) / den;
                const double t = ta + h * (best + off) / samples;
                m[c] = std::max(m[c], std::abs(hermite5(seg, i, t)[c]));
            }
        }
    }
    return m;
}

Trajectory Trajectory::shifted_to(double new_start) const {
    Trajectory out = *this;
    const double offset = new_start - start_time();
    for (auto& seg : out.segments_)
        for (auto& t : seg.times) t += offset;
    for (auto& seg : out.schedule_.segments)
        for (auto& step : seg) step.t_end += offset;
    return out;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const std::vector<std::string>& names,
                          const std::vector<double>& extra_times) {
    os << "time";
    for (const auto& n : names) os << ',' << n;
    os << '\n';
    const auto flags = os.flags();
    const auto prec = os.precision();
    os << std::setprecision(15);
    auto row = [&](double t, const Vector& z) {
        os << t;
        for (Eigen::Index i = 0; i < z.size(); ++i) os << ',' << z[i];
        os << '\n';
    };

    std::vector<double> extra = extra_times;
    std::sort(extra.begin(), extra.end());
    std::size_t e = 0;
    for (const auto& seg : traj.segments()) {
        for (std::size_t i = 0; i < seg.times.size(); ++i) {
            const double t = seg.times[i];
            while (e < extra.size() && extra[e] < t) {
                row(extra[e], traj.interpolate(extra[e]));
                ++e;
            }
            while (e < extra.size() && extra[e] == t) ++e;
            row(t, seg.states[i]);
        }
    }
    while (e < extra.size()) {
        if (extra[e] <= traj.end_time()) row(extra[e], traj.interpolate(extra[e]));
        ++e;
    }
    os.flags(flags);
    os.precision(prec);
}

}  // namespace kinfit
