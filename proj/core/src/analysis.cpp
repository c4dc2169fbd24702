#include "handover/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "handover/error.hpp"
#include "handover/log.hpp"

namespace handover {

using nn::Matrix;
using nn::Tape;
using nn::Var;

std::string_view to_string(ImportanceChannel c) { return c == ImportanceChannel::Position ? "position" : "rotation"; }

std::vector<ImportanceRow> JointImportanceTable::channel(ImportanceChannel c) const {
    std::vector<ImportanceRow> out;
    for (const auto& r : rows)
        if (r.channel == c) out.push_back(r);
    return out;
}

Eigen::MatrixXd input_sensitivity(const SensitivityGraph& graph, const MotionWindow& window) {
    Tape tape;
    tape.set_accumulate_parameters(false);
    const auto [leaf, out] = graph(tape, window);
    const Matrix& y = tape.value(out);
    if (y.rows() != 1) throw ValidationError("input_sensitivity: output must be a single row");
    Matrix total = Matrix::Zero(tape.value(leaf).rows(), tape.value(leaf).cols());
    for (Eigen::Index k = 0; k < y.cols(); ++k) {
        tape.clear_grads();
        Matrix seed = Matrix::Zero(1, y.cols());
        seed(0, k) = 1.0;
        tape.backward(out, seed);
        if (tape.grad(leaf).size() != 0) total += tape.grad(leaf).cwiseAbs();
    }
    return total;
}

JointImportanceTable joint_importance(const SensitivityGraph& graph, const std::vector<MotionWindow>& windows,
                                      const Skeleton& skeleton) {
    if (windows.empty()) throw ValidationError("joint_importance: no windows");
    const std::size_t J = skeleton.size();
    Eigen::VectorXd pos = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(J));
    Eigen::VectorXd rot = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(J));
    for (const auto& w : windows) {
        const Matrix s = input_sensitivity(graph, w);
        if (s.cols() != static_cast<Eigen::Index>(primary_feature_width(J)))
            throw ValidationError("joint_importance: sensitivity width does not match the skeleton");
        const Eigen::RowVectorXd per_coord = s.colwise().sum();
        for (std::size_t j = 0; j < J; ++j) {
            const auto o = static_cast<Eigen::Index>(9 * j);
            pos(static_cast<Eigen::Index>(j)) += per_coord.segment<3>(o).sum();
            rot(static_cast<Eigen::Index>(j)) += per_coord.segment<6>(o + 3).sum();
        }
    }
    pos /= static_cast<double>(windows.size());
    rot /= static_cast<double>(windows.size());
    JointImportanceTable table;
    for (auto [channel, values] : {std::pair{ImportanceChannel::Position, &pos}, {ImportanceChannel::Rotation, &rot}}) {
        std::vector<std::size_t> order(J);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [values](std::size_t a, std::size_t b) {
            return (*values)(static_cast<Eigen::Index>(a)) > (*values)(static_cast<Eigen::Index>(b));
        });
        for (std::size_t r = 0; r < J; ++r)
            table.rows.push_back({static_cast<int>(r + 1), skeleton.joint(order[r]).name, channel,
                                  (*values)(static_cast<Eigen::Index>(order[r]))});
    }
    return table;
}

namespace {

Matrix one_hot_matrix(HandoverState s) {
    Matrix m(1, kNumHandoverStates);
    const auto oh = one_hot(s);
    for (int i = 0; i < kNumHandoverStates; ++i) m(0, i) = oh[static_cast<std::size_t>(i)];
    return m;
}

// Decoder context whose primary part is differentiable w.r.t. the leaf.
Var context_from_leaf(Tape& tape, Var h, const MotionWindow& w) {
    const Eigen::RowVectorXd ctx = decoder_context(w.h_seen(), w.r_seen());
    const Eigen::Index fp = w.features->primary.cols();
    return tape.concat_cols({tape.slice_rows(h, w.T, 1), tape.constant(ctx.tail(ctx.size() - fp))});
}

}  // namespace

SensitivityGraph svae_sensitivity(const SvaeModel& model) {
    return [&model](Tape& tape, const MotionWindow& w) {
        const Var h = tape.leaf(w.h_seen());
        const Var r = tape.constant(w.r_seen());
        const auto lc = model.encode_lc(tape, h, r, tape.constant(one_hot_matrix(w.state)));
        const auto dec = model.decode(tape, lc.mu, context_from_leaf(tape, h, w));
        return std::pair{h, dec.position};
    };
}

SensitivityGraph rot_sensitivity(const RotModel& model) {
    return [&model](Tape& tape, const MotionWindow& w) {
        const Var h = tape.leaf(w.h_seen());
        const auto g = model.graph(tape, h, tape.constant(w.r_seen()), context_from_leaf(tape, h, w), nullptr);
        return std::pair{h, g.output};
    };
}

SensitivityGraph timing_sensitivity(const TimingModel& model) {
    return [&model](Tape& tape, const MotionWindow& w) {
        const Var h = tape.leaf(w.h_seen());
        return std::pair{h, model.graph(tape, tape.flatten_rows(h))};
    };
}

std::string importance_csv(const JointImportanceTable& table) {
    std::ostringstream os;
    os << "rank,joint,channel,magnitude\n";
    for (const auto& r : table.rows)
        os << r.rank << ',' << r.joint << ',' << to_string(r.channel) << ',' << format_double(r.magnitude) << '\n';
    return os.str();
}

// ---------------------------------------------------------------- statistics

HandoverStats handover_stats(const Corpus& corpus) {
    HandoverStats s;
    for (const auto& clip : corpus.clips) {
        for (const auto& seg : segment_handovers(clip)) {
            const double d = static_cast<double>(seg.end - seg.start + 1) / clip.fps;
            s.durations.push_back(d);
            const auto obs = observe_transfer(clip, seg);
            if (!obs) continue;
            TransferPoint t;
            t.clip = clip.name;
            t.activity = clip.activity;
            t.kind = seg.kind;
            t.duration = d;
            t.rot = obs->rot;
            t.primary_palm = obs->primary_palm;
            t.robot_palm = obs->robot_palm;
            s.transfers.push_back(std::move(t));
        }
    }
    s.segments = s.durations.size();
    if (s.durations.empty()) {
        log_warning("handover_stats: corpus contains no handover segments");
        return s;
    }
    const auto n = static_cast<double>(s.durations.size());
    s.duration_mean = std::accumulate(s.durations.begin(), s.durations.end(), 0.0) / n;
    double sq = 0.0;
    for (double d : s.durations) sq += (d - s.duration_mean) * (d - s.duration_mean);
    s.duration_std = std::sqrt(sq / n);
    return s;
}

std::string stats_summary_csv(const HandoverStats& stats) {
    std::ostringstream os;
    os << "segments,duration_mean_s,duration_std_s\n"
       << stats.segments << ',' << format_double(stats.duration_mean) << ',' << format_double(stats.duration_std)
       << '\n';
    return os.str();
}

std::string stats_points_csv(const HandoverStats& stats) {
    std::ostringstream os;
    os << "clip,activity,kind,duration_s,rot_x,rot_y,rot_z,dir_x,dir_y,dir_z,primary_x,primary_y,primary_z,robot_x,"
          "robot_y,robot_z\n";
    auto v3 = [&os](const Vec3& v) {
        os << ',' << format_double(v.x()) << ',' << format_double(v.y()) << ',' << format_double(v.z());
    };
    for (const auto& t : stats.transfers) {
        os << t.clip << ',' << activity_slug(t.activity) << ',' << to_string(t.kind) << ',' << format_double(t.duration);
        v3(t.rot.position);
        v3(t.rot.direction);
        v3(t.primary_palm);
        v3(t.robot_palm);
        os << '\n';
    }
    return os.str();
}

namespace {

constexpr const char* kPalette[kNumActivities] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
                                                  "#393b79", "#637939", "#843c39"};

}  // namespace

std::string stats_svg(const HandoverStats& stats) {
    // Panel layout: two rows (handover location, palms) x two views.
    constexpr double panel = 300.0, margin = 40.0, range = 1.0;
    const double width = 2 * panel + 3 * margin + 180.0;
    const double height = 2 * panel + 3 * margin;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    struct View {
        const char* title;
        int a;  // horizontal axis index
        int b;  // vertical axis index
        bool flip_h;
    };
    const View views[2] = {{"front view (x right-negative, y up)", 0, 1, true},
                           {"top view (x right-negative, z forward)", 0, 2, true}};
    const char* rows[2] = {"handover location", "palms (filled: user, open: robot)"};
    for (int row = 0; row < 2; ++row) {
        for (int v = 0; v < 2; ++v) {
            const double ox = margin + v * (panel + margin);
            const double oy = margin + row * (panel + margin);
            os << "<rect x=\"" << ox << "\" y=\"" << oy << "\" width=\"" << panel << "\" height=\"" << panel
               << "\" fill=\"none\" stroke=\"#888\"/>\n";
            os << "<text x=\"" << ox << "\" y=\"" << oy - 6 << "\">" << rows[row] << ": " << views[v].title
               << "</text>\n";
            auto px = [&](const Vec3& p) {
                double h = p(views[v].a);
                if (views[v].flip_h) h = -h;
                const double x = ox + panel * (0.5 + 0.5 * h / range);
                const double y = oy + panel * (0.5 - 0.5 * p(views[v].b) / range);
                return std::pair{x, y};
            };
            for (const auto& t : stats.transfers) {
                const char* colour = kPalette[static_cast<int>(t.activity)];
                if (row == 0) {
                    const auto [x, y] = px(t.rot.position);
                    os << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"2.5\" fill=\"" << colour << "\"/>\n";
                } else {
                    const auto [x1, y1] = px(t.primary_palm);
                    const auto [x2, y2] = px(t.robot_palm);
                    os << "<circle cx=\"" << x1 << "\" cy=\"" << y1 << "\" r=\"2.5\" fill=\"" << colour << "\"/>\n";
                    os << "<circle cx=\"" << x2 << "\" cy=\"" << y2 << "\" r=\"2.5\" fill=\"none\" stroke=\"" << colour
                       << "\"/>\n";
                }
            }
        }
    }
    const double lx = 2 * panel + 3 * margin;
    for (int a = 0; a < kNumActivities; ++a) {
        const double y = margin + 14.0 * a;
        os << "<circle cx=\"" << lx << "\" cy=\"" << y << "\" r=\"4\" fill=\"" << kPalette[a] << "\"/>";
        os << "<text x=\"" << lx + 8 << "\" y=\"" << y + 4 << "\">" << activity_slug(static_cast<Activity>(a))
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace handover
