#include "handover/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "handover/error.hpp"

namespace handover {

// ---------------------------------------------------------------- tables

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw SchemaError("missing column '" + std::string(name) + "'");
}

CsvTable parse_csv(std::string_view text) {
    CsvTable table;
    bool first = true;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            cells.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (first) {
            table.header = std::move(cells);
            first = false;
        } else {
            if (cells.size() != table.header.size())
                throw SchemaError("row " + std::to_string(table.rows.size() + 1) + " has " +
                                  std::to_string(cells.size()) + " cells, header has " +
                                  std::to_string(table.header.size()));
            table.rows.push_back(std::move(cells));
        }
    }
    return table;
}

std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

double parse_double(std::string_view text) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size())
        throw SchemaError("not a number: '" + std::string(text) + "'");
    return v;
}

// ---------------------------------------------------------------- annotations

std::vector<Annotation> load_annotations(const CsvTable& table, std::size_t frame_count, double fps) {
    std::vector<Annotation> out(frame_count);
    if (table.rows.empty()) return out;
    const std::size_t c_frame = table.column("frame");
    const std::size_t c_state = table.column("handover_state");
    const std::size_t c_poss = table.column("possession");
    const std::size_t c_time = table.column("time_in_segment");

    long previous = -1;
    std::size_t run_length = 0;
    HandoverState run_state = HandoverState::Idle;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        long frame = 0;
        const auto& ft = row[c_frame];
        auto [p, ec] = std::from_chars(ft.data(), ft.data() + ft.size(), frame);
        if (ec != std::errc() || p != ft.data() + ft.size()) throw SchemaError("bad frame index '" + ft + "'");
        if (r > 0 && frame != previous + 1)
            throw SchemaError("annotation frames are not contiguous: " + std::to_string(previous) + " then " +
                              std::to_string(frame));
        if (frame < 0 || static_cast<std::size_t>(frame) >= frame_count)
            throw SchemaError("annotation frame " + std::to_string(frame) + " outside clip of " +
                              std::to_string(frame_count) + " frames");
        previous = frame;
        Annotation a;
        a.state = parse_handover_state(row[c_state]);
        a.possession = parse_possession(row[c_poss]);
        a.time_in_segment = parse_double(row[c_time]);
        if (a.state == HandoverState::Idle) {
            run_length = 0;
        } else {
            if (run_state != a.state) run_length = 0;
            const double expected = static_cast<double>(run_length) / fps;
            if (std::abs(a.time_in_segment - expected) > 1e-6)
                throw SchemaError("frame " + std::to_string(frame) + ": time_in_segment " + row[c_time] +
                                  " != " + format_double(expected));
            ++run_length;
        }
        run_state = a.state;
        out[static_cast<std::size_t>(frame)] = a;
    }
    return out;
}

std::string write_annotations_csv(const std::vector<Annotation>& annotations) {
    std::string out = "frame,handover_state,possession,time_in_segment\n";
    for (std::size_t f = 0; f < annotations.size(); ++f) {
        const auto& a = annotations[f];
        out += std::to_string(f);
        out += ',';
        out += to_string(a.state);
        out += ',';
        out += to_string(a.possession);
        out += ',';
        out += format_double(a.time_in_segment);
        out += '\n';
    }
    return out;
}

std::vector<HandoverSegment> segment_handovers(const std::vector<Annotation>& annotations) {
    std::vector<HandoverSegment> out;
    std::size_t f = 0;
    while (f < annotations.size()) {
        if (annotations[f].state == HandoverState::Idle) {
            ++f;
            continue;
        }
        HandoverSegment seg;
        seg.start = f;
        seg.kind = annotations[f].state;
        while (f < annotations.size() && annotations[f].state != HandoverState::Idle) {
            if (annotations[f].state != seg.kind)
                throw ConsistencyError("handover run starting at frame " + std::to_string(seg.start) +
                                       " mixes handing_over and taking_back at frame " + std::to_string(f));
            ++f;
        }
        seg.end = f - 1;
        out.push_back(seg);
    }
    return out;
}

std::vector<HandoverSegment> segment_handovers(const MotionClip& clip) {
    return segment_handovers(clip.annotations);
}

// ---------------------------------------------------------------- features

Eigen::RowVectorXd primary_frame_features(const Skeleton& skeleton, const Pose& pose, const HipFrame& hip) {
    const auto fk = forward_kinematics_full(skeleton, pose);
    Eigen::RowVectorXd out(static_cast<Eigen::Index>(skeleton.size() * 9));
    for (std::size_t j = 0; j < skeleton.size(); ++j) {
        const Vec3 p = hip.to_local(fk.positions[j]);
        const Mat3 r = j == 0 ? Mat3(hip.yaw * pose.root_rotation) : local_rotation(skeleton, pose, j);
        const auto o = static_cast<Eigen::Index>(j * 9);
        out.segment<3>(o) = p.transpose();
        out.segment<3>(o + 3) = r.col(0).transpose();
        out.segment<3>(o + 6) = r.col(1).transpose();
    }
    return out;
}

Eigen::RowVectorXd primary_frame_features(const Skeleton& skeleton, const Pose& pose) {
    const auto hf = hip_frame(pose.root_position, pose.root_rotation);
    if (!hf) throw DegenerateError("primary_frame_features: vertical facing axis");
    return primary_frame_features(skeleton, pose, *hf);
}

Eigen::Matrix<double, 1, kRobotFeatureWidth> robot_frame_features(const HipFrame& hip, const Vec3& ee_position,
                                                                  const Mat3& ee_rotation) {
    Eigen::Matrix<double, 1, kRobotFeatureWidth> out;
    const Mat3 r = hip.to_local(ee_rotation);
    out.segment<3>(0) = hip.to_local(ee_position).transpose();
    out.segment<3>(3) = r.col(0).transpose();
    out.segment<3>(6) = r.col(1).transpose();
    return out;
}

std::shared_ptr<const ClipFeatures> clip_features(const MotionClip& clip) {
    check_clip(clip);
    const auto& skel = *clip.skeleton;
    auto feats = std::make_shared<ClipFeatures>();
    const auto n = static_cast<Eigen::Index>(clip.frames.size());
    feats->joint_count = skel.size();
    feats->primary.resize(n, static_cast<Eigen::Index>(primary_feature_width(skel.size())));
    feats->robot.resize(n, kRobotFeatureWidth);
    feats->states.resize(clip.frames.size());
    feats->hip_frames.resize(clip.frames.size());
    std::optional<HipFrame> previous;
    for (Eigen::Index f = 0; f < n; ++f) {
        const auto& fr = clip.frames[static_cast<std::size_t>(f)];
        auto hf = hip_frame(fr.primary.root_position, fr.primary.root_rotation);
        if (!hf) {
            if (!previous) throw DegenerateError("clip '" + clip.name + "': first frame has a vertical facing axis");
            hf = HipFrame{fr.primary.root_position, previous->yaw};
        }
        previous = hf;
        feats->hip_frames[static_cast<std::size_t>(f)] = *hf;
        feats->primary.row(f) = primary_frame_features(skel, fr.primary, *hf);
        feats->robot.row(f) = robot_frame_features(*hf, fr.robot_ee_position, fr.robot_ee_rotation);
        feats->states[static_cast<std::size_t>(f)] = clip.annotations[static_cast<std::size_t>(f)].state;
    }
    return feats;
}

std::size_t window_count(std::size_t clip_length, int T, int stride) {
    const auto need = static_cast<std::size_t>(2 * T + 2);
    if (clip_length < need) return 0;
    const std::size_t centers = clip_length - need + 1;
    return (centers + static_cast<std::size_t>(stride) - 1) / static_cast<std::size_t>(stride);
}

std::vector<MotionWindow> make_windows(std::shared_ptr<const ClipFeatures> features, int T, int stride) {
    if (T <= 0) throw ValidationError("window half-length T must be positive");
    if (stride <= 0) throw ValidationError("window stride must be positive");
    const auto len = static_cast<int>(features->frames());
    if (len < 2 * T + 2)
        throw TooShortError("clip of " + std::to_string(len) + " frames is shorter than 2T+2 = " +
                            std::to_string(2 * T + 2));
    std::vector<MotionWindow> out;
    out.reserve(window_count(static_cast<std::size_t>(len), T, stride));
    for (int t = T; t <= len - T - 2; t += stride) {
        MotionWindow w;
        w.features = features;
        w.center = t;
        w.T = T;
        w.state = features->states[static_cast<std::size_t>(t)];
        w.target_next_ee = features->robot.block<1, 3>(t + 1, 0).transpose();
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<MotionWindow> make_windows(const MotionClip& clip, int T, int stride) {
    if (static_cast<int>(clip.frames.size()) < 2 * T + 2)
        throw TooShortError("clip '" + clip.name + "' of " + std::to_string(clip.frames.size()) +
                            " frames is shorter than 2T+2 = " + std::to_string(2 * T + 2));
    return make_windows(clip_features(clip), T, stride);
}

// ---------------------------------------------------------------- corpus

std::vector<int> Corpus::pair_ids() const {
    std::set<int> ids;
    for (const auto& c : clips) ids.insert(c.pair_id);
    return {ids.begin(), ids.end()};
}

CorpusSplit participant_split(const Corpus& corpus, const std::vector<int>& test_pair_ids) {
    const auto present = corpus.pair_ids();
    const std::set<int> test(test_pair_ids.begin(), test_pair_ids.end());
    for (int id : test)
        if (!std::binary_search(present.begin(), present.end(), id))
            throw LookupError("pair id " + std::to_string(id) + " does not occur in the corpus");
    CorpusSplit split;
    split.train.skeleton = corpus.skeleton;
    split.test.skeleton = corpus.skeleton;
    for (const auto& c : corpus.clips) (test.count(c.pair_id) ? split.test : split.train).clips.push_back(c);
    return split;
}

CorpusSummary summarize(const Corpus& corpus) {
    CorpusSummary s;
    s.clips = corpus.clips.size();
    for (const auto& c : corpus.clips) {
        s.frames += c.frames.size();
        s.segments += segment_handovers(c).size();
    }
    s.pair_ids = corpus.pair_ids();
    return s;
}

// ---------------------------------------------------------------- motion primitives

double minimum_jerk_profile(double tau) {
    const double t = std::clamp(tau, 0.0, 1.0);
    const double t3 = t * t * t;
    return t3 * (10.0 - 15.0 * t + 6.0 * t * t);
}

std::vector<Vec3> minimum_jerk(const Vec3& start, const Vec3& end, double duration, double fps) {
    if (!(duration > 0.0)) throw ValidationError("minimum_jerk: duration must be positive");
    if (!(fps > 0.0)) throw ValidationError("minimum_jerk: fps must be positive");
    const auto steps = static_cast<long>(std::lround(duration * fps));
    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(steps) + 1);
    for (long k = 0; k <= steps; ++k) {
        const double tau = steps == 0 ? 1.0 : static_cast<double>(k) / static_cast<double>(steps);
        out.push_back(start + (end - start) * minimum_jerk_profile(tau));
    }
    return out;
}

}  // namespace handover
