#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "handover/dataio.hpp"
#include "handover/error.hpp"

namespace handover {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Token {
    std::string text;
    int line;
};

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    int line = 1;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (c == '\n') {
            ++line;
            ++i;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '{' || c == '}') {
            out.push_back({std::string(1, c), line});
            ++i;
        } else {
            std::size_t j = i;
            while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) && text[j] != '{' &&
                   text[j] != '}')
                ++j;
            out.push_back({std::string(text.substr(i, j - i)), line});
            i = j;
        }
    }
    return out;
}

enum class ChannelKind { Position, Rotation };

struct Channel {
    ChannelKind kind;
    Axis axis;
};

class Parser {
public:
    Parser(std::string_view text, const BvhOptions& options) : tokens_(tokenize(text)), options_(options) {}

    BvhResult parse() {
        expect("HIERARCHY");
        expect("ROOT");
        parse_joint(-1);
        if (peek().text != "MOTION") fail("expected MOTION, got '" + peek().text + "'");
        const int motion_line = peek().line;
        next();
        expect("Frames:");
        const long frames = to_long(next());
        if (frames < 0) fail("negative frame count");
        expect("Frame");
        expect("Time:");
        const double frame_time = to_double(next());
        if (!(frame_time > 0.0)) fail("Frame Time must be positive");

        auto skeleton = std::make_shared<const Skeleton>(Skeleton(std::move(joints_)));
        BvhResult result;
        result.skeleton = skeleton;
        result.clip.skeleton = skeleton;
        result.clip.fps = std::round(1.0 / frame_time);
        result.clip.name = "bvh";

        // Frame values: one line per frame.
        std::size_t total_channels = 0;
        for (const auto& ch : channels_) total_channels += ch.size();
        std::size_t k = pos_;
        long parsed = 0;
        while (k < tokens_.size()) {
            const int line = tokens_[k].line;
            std::vector<double> values;
            while (k < tokens_.size() && tokens_[k].line == line) values.push_back(to_double(tokens_[k++]));
            if (values.size() != total_channels)
                throw ParseError(line, "frame has " + std::to_string(values.size()) + " values, expected " +
                                           std::to_string(total_channels) + " channels");
            if (parsed == frames)
                throw ParseError(line, "frame-count mismatch: expected " + std::to_string(frames) +
                                           " frames, found extra data");
            result.clip.frames.push_back(make_frame(*skeleton, values));
            ++parsed;
        }
        if (parsed != frames) {
            const int line = tokens_.empty() ? motion_line : tokens_.back().line;
            throw ParseError(line, "frame-count mismatch: expected " + std::to_string(frames) + " frames, got " +
                                       std::to_string(parsed));
        }
        result.clip.annotations.assign(result.clip.frames.size(), Annotation{});
        return result;
    }

private:
    const Token& peek() const {
        if (pos_ >= tokens_.size()) throw ParseError(tokens_.empty() ? 1 : tokens_.back().line, "unexpected end of input");
        return tokens_[pos_];
    }
    const Token& next() {
        const Token& t = peek();
        ++pos_;
        return t;
    }
    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError(pos_ < tokens_.size() ? tokens_[pos_].line : (tokens_.empty() ? 1 : tokens_.back().line), what);
    }
    void expect(std::string_view word) {
        const Token& t = peek();
        if (t.text != word) throw ParseError(t.line, "expected '" + std::string(word) + "', got '" + t.text + "'");
        ++pos_;
    }
    static double to_double(const Token& t) {
        double v = 0.0;
        const char* b = t.text.data();
        const char* e = b + t.text.size();
        if (*b == '+') ++b;
        auto [p, ec] = std::from_chars(b, e, v);
        if (ec != std::errc() || p != e) throw ParseError(t.line, "expected a number, got '" + t.text + "'");
        return v;
    }
    static long to_long(const Token& t) {
        long v = 0;
        auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        if (ec != std::errc() || p != t.text.data() + t.text.size())
            throw ParseError(t.line, "expected an integer, got '" + t.text + "'");
        return v;
    }

    Vec3 parse_offset() {
        expect("OFFSET");
        Vec3 o;
        for (int a = 0; a < 3; ++a) o[a] = to_double(next()) * options_.unit_scale;
        return o;
    }

    void parse_joint(int parent) {
        const Token& name = next();
        if (name.text == "{") throw ParseError(name.line, "joint is missing a name");
        expect("{");
        JointSpec spec;
        spec.name = name.text;
        spec.parent = parent;
        spec.offset = parse_offset();
        std::vector<Channel> chans;
        if (peek().text == "CHANNELS") {
            next();
            const Token& count_tok = next();
            const long count = to_long(count_tok);
            if (count < 0 || count > 6) throw ParseError(count_tok.line, "invalid channel count");
            for (long c = 0; c < count; ++c) {
                const Token& t = next();
                if (t.text.size() < 9) throw ParseError(t.line, "unknown channel '" + t.text + "'");
                const char ax = t.text[0];
                const std::string rest = t.text.substr(1);
                Axis axis;
                if (ax == 'X') axis = Axis::X;
                else if (ax == 'Y') axis = Axis::Y;
                else if (ax == 'Z') axis = Axis::Z;
                else throw ParseError(t.line, "unknown channel '" + t.text + "'");
                if (rest == "position") {
                    if (parent >= 0)
                        throw ParseError(t.line, "position channels are only supported on the root joint");
                    chans.push_back({ChannelKind::Position, axis});
                } else if (rest == "rotation") {
                    for (const auto& d : spec.dof)
                        if (d.axis == axis) throw ParseError(t.line, "repeated rotation channel '" + t.text + "'");
                    chans.push_back({ChannelKind::Rotation, axis});
                    spec.dof.push_back({axis, -kInf, kInf});
                } else {
                    throw ParseError(t.line, "unknown channel '" + t.text + "'");
                }
            }
        }
        const int index = static_cast<int>(joints_.size());
        joints_.push_back(std::move(spec));
        channels_.push_back(std::move(chans));
        while (true) {
            const Token& t = next();
            if (t.text == "}") break;
            if (t.text == "JOINT") {
                parse_joint(index);
            } else if (t.text == "End") {
                expect("Site");
                expect("{");
                parse_offset();
                expect("}");
            } else {
                throw ParseError(t.line, "unexpected token '" + t.text + "' in joint '" + joints_[static_cast<std::size_t>(index)].name + "'");
            }
        }
    }

    Frame make_frame(const Skeleton& skeleton, const std::vector<double>& values) const {
        Frame f;
        f.primary = Pose::rest(skeleton);
        std::size_t k = 0;
        for (std::size_t j = 0; j < channels_.size(); ++j) {
            Vec3 translation = Vec3::Zero();
            Mat3 rot = Mat3::Identity();
            Vec3 angles = Vec3::Zero();
            int a = 0;
            for (const auto& ch : channels_[j]) {
                const double v = values[k++];
                if (ch.kind == ChannelKind::Position) {
                    translation[static_cast<int>(ch.axis)] = v * options_.unit_scale;
                } else {
                    const double rad = v * kDegToRad;
                    rot = rot * axis_rotation(ch.axis, rad);
                    angles[a++] = rad;
                }
            }
            if (j == 0) {
                // Root offset is folded into the root position.
                f.primary.root_position = skeleton.joint(0).offset + translation;
                f.primary.root_rotation = rot;
            } else {
                f.primary.joint_angles[j] = angles;
            }
        }
        return f;
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    BvhOptions options_;
    std::vector<JointSpec> joints_;
    std::vector<std::vector<Channel>> channels_;
};

}  // namespace

BvhResult parse_bvh(std::string_view text, const BvhOptions& options) {
    Parser parser(text, options);
    BvhResult r = parser.parse();
    // Root offset was folded into root_position; keep FK consistent.
    auto joints = r.skeleton->joints();
    joints[0].offset = Vec3::Zero();
    r.skeleton = std::make_shared<const Skeleton>(Skeleton(std::move(joints)));
    r.clip.skeleton = r.skeleton;
    return r;
}

BvhResult load_bvh(const std::filesystem::path& path, const BvhOptions& options) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_bvh(ss.str(), options);
}

std::string write_bvh(const Skeleton& skeleton, const std::vector<Pose>& poses, double fps, double unit_scale) {
    std::ostringstream out;
    out << std::setprecision(10);
    const std::array<Axis, 3> root_order{Axis::Z, Axis::X, Axis::Y};
    std::vector<std::vector<std::size_t>> children(skeleton.size());
    for (std::size_t j = 1; j < skeleton.size(); ++j)
        children[static_cast<std::size_t>(skeleton.joint(j).parent)].push_back(j);

    auto write_joint = [&](auto&& self, std::size_t j, int depth) -> void {
        const std::string ind(static_cast<std::size_t>(depth) * 2, ' ');
        const auto& spec = skeleton.joint(j);
        out << ind << (j == 0 ? "ROOT " : "JOINT ") << spec.name << "\n" << ind << "{\n";
        const Vec3 off = spec.offset / unit_scale;
        out << ind << "  OFFSET " << off.x() << " " << off.y() << " " << off.z() << "\n";
        if (j == 0) {
            out << ind << "  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation\n";
        } else {
            out << ind << "  CHANNELS " << spec.dof.size();
            for (const auto& d : spec.dof) out << " " << axis_name(d.axis) << "rotation";
            out << "\n";
        }
        if (children[j].empty()) {
            out << ind << "  End Site\n" << ind << "  {\n" << ind << "    OFFSET 0 0 0\n" << ind << "  }\n";
        }
        for (std::size_t c : children[j]) self(self, c, depth + 1);
        out << ind << "}\n";
    };
    out << "HIERARCHY\n";
    write_joint(write_joint, 0, 0);
    out << "MOTION\nFrames: " << poses.size() << "\nFrame Time: " << 1.0 / fps << "\n";
    constexpr double r2d = 180.0 / std::numbers::pi;
    for (const auto& p : poses) {
        const Vec3 pos = (p.root_position - skeleton.joint(0).offset) / unit_scale;
        const Vec3 ra = matrix_to_euler(root_order, p.root_rotation) * r2d;
        out << pos.x() << " " << pos.y() << " " << pos.z() << " " << ra.x() << " " << ra.y() << " " << ra.z();
        for (std::size_t j = 1; j < skeleton.size(); ++j)
            for (std::size_t a = 0; a < skeleton.joint(j).dof.size(); ++a)
                out << " " << p.joint_angles[j][static_cast<Eigen::Index>(a)] * r2d;
        out << "\n";
    }
    return out.str();
}

void attach_robot_end_effector(MotionClip& primary, const MotionClip& robot, std::string_view ee_joint) {
    if (!robot.skeleton) throw StructuralError("robot clip has no skeleton");
    if (robot.frames.size() != primary.frames.size())
        throw StructuralError("robot clip has " + std::to_string(robot.frames.size()) + " frames, primary has " +
                              std::to_string(primary.frames.size()));
    const std::size_t ee = robot.skeleton->index_of(ee_joint);
    for (std::size_t f = 0; f < primary.frames.size(); ++f) {
        const auto fk = forward_kinematics_full(*robot.skeleton, robot.frames[f].primary);
        primary.frames[f].robot_ee_position = fk.positions[ee];
        primary.frames[f].robot_ee_rotation = fk.rotations[ee];
    }
}

}  // namespace handover
