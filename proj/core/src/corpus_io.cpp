#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "handover/dataio.hpp"
#include "handover/error.hpp"

namespace handover {
namespace {

using nlohmann::json;

json limit_to_json(double v) {
    if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
    return v;
}

double limit_from_json(const json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw SchemaError("bad angle limit '" + s + "'");
    }
    return j.get<double>();
}

Axis axis_from_char(char c) {
    switch (c) {
        case 'X': return Axis::X;
        case 'Y': return Axis::Y;
        case 'Z': return Axis::Z;
        default: throw SchemaError(std::string("bad axis '") + c + "'");
    }
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << content;
    if (!out) throw IoError("write failed for " + p.string());
}

json skeleton_json(const Skeleton& s) {
    json joints = json::array();
    for (const auto& j : s.joints()) {
        json dof = json::array();
        for (const auto& d : j.dof)
            dof.push_back({{"axis", std::string(1, axis_name(d.axis))},
                           {"min", limit_to_json(d.min_angle)},
                           {"max", limit_to_json(d.max_angle)}});
        joints.push_back({{"name", j.name},
                          {"parent", j.parent},
                          {"offset", {j.offset.x(), j.offset.y(), j.offset.z()}},
                          {"dof", dof}});
    }
    return json{{"joints", joints}};
}

Skeleton skeleton_from(const json& j) {
    std::vector<JointSpec> joints;
    for (const auto& jj : j.at("joints")) {
        JointSpec spec;
        spec.name = jj.at("name").get<std::string>();
        spec.parent = jj.at("parent").get<int>();
        const auto& o = jj.at("offset");
        spec.offset = Vec3(o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>());
        for (const auto& d : jj.at("dof")) {
            const auto ax = d.at("axis").get<std::string>();
            if (ax.size() != 1) throw SchemaError("bad axis '" + ax + "'");
            spec.dof.push_back({axis_from_char(ax[0]), limit_from_json(d.at("min")), limit_from_json(d.at("max"))});
        }
        joints.push_back(std::move(spec));
    }
    return Skeleton(std::move(joints));
}

}  // namespace

std::string skeleton_to_json(const Skeleton& skeleton) { return skeleton_json(skeleton).dump(2); }

Skeleton skeleton_from_json(std::string_view text) {
    try {
        return skeleton_from(json::parse(text));
    } catch (const json::exception& e) {
        throw SchemaError(std::string("skeleton json: ") + e.what());
    }
}

std::string write_clip_csv(const MotionClip& clip) {
    check_clip(clip);
    const auto& skel = *clip.skeleton;
    std::string out = "frame";
    static constexpr const char* kSuffix[] = {"px", "py", "pz", "r6_0", "r6_1", "r6_2", "r6_3", "r6_4", "r6_5"};
    for (const auto& j : skel.joints())
        for (const char* suf : kSuffix) out += "," + j.name + "_" + suf;
    for (const char* suf : kSuffix) out += std::string(",ee_") + suf;
    out += '\n';
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
        const auto& fr = clip.frames[f];
        const auto fk = forward_kinematics_full(skel, fr.primary);
        out += std::to_string(f);
        auto put = [&](const Vec3& p, const Mat3& r) {
            for (int a = 0; a < 3; ++a) out += "," + format_double(p[a]);
            for (int c = 0; c < 2; ++c)
                for (int a = 0; a < 3; ++a) out += "," + format_double(r(a, c));
        };
        for (std::size_t j = 0; j < skel.size(); ++j) put(fk.positions[j], local_rotation(skel, fr.primary, j));
        put(fr.robot_ee_position, fr.robot_ee_rotation);
        out += '\n';
    }
    return out;
}

std::vector<Frame> read_clip_csv(const CsvTable& table, const Skeleton& skeleton) {
    const std::size_t expected = 1 + (skeleton.size() + 1) * 9;
    if (table.header.size() != expected)
        throw SchemaError("clip csv has " + std::to_string(table.header.size()) + " columns, expected " +
                          std::to_string(expected));
    const std::size_t root = table.column(skeleton.joint(0).name + "_px");
    const std::size_t ee = table.column("ee_px");
    std::vector<Frame> frames;
    frames.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (parse_double(row[0]) != static_cast<double>(r))
            throw SchemaError("clip csv frames must be 0..N-1 in order (row " + std::to_string(r) + ")");
        auto vec6 = [&](std::size_t c) {
            Vec6 v;
            for (int k = 0; k < 6; ++k) v[k] = parse_double(row[c + static_cast<std::size_t>(k)]);
            return v;
        };
        auto vec3 = [&](std::size_t c) {
            return Vec3(parse_double(row[c]), parse_double(row[c + 1]), parse_double(row[c + 2]));
        };
        Frame f;
        f.primary = Pose::rest(skeleton);
        f.primary.root_rotation = sixd_to_matrix(vec6(root + 3));
        f.primary.root_position = vec3(root) - f.primary.root_rotation * skeleton.joint(0).offset;
        for (std::size_t j = 1; j < skeleton.size(); ++j) {
            const std::size_t c = table.column(skeleton.joint(j).name + "_r6_0");
            f.primary.joint_angles[j] = matrix_to_joint_angles(skeleton.joint(j).dof, sixd_to_matrix(vec6(c)));
        }
        f.robot_ee_position = vec3(ee);
        f.robot_ee_rotation = sixd_to_matrix(vec6(ee + 3));
        frames.push_back(std::move(f));
    }
    return frames;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!corpus.skeleton) throw StructuralError("corpus has no skeleton");
    std::error_code ec;
    fs::create_directories(dir / "clips", ec);
    if (ec) throw IoError("cannot create " + (dir / "clips").string() + ": " + ec.message());
    json clips = json::array();
    for (const auto& c : corpus.clips) {
        const std::string base = "clips/" + c.name;
        write_file(dir / (base + ".csv"), write_clip_csv(c));
        write_file(dir / (base + ".annotations.csv"), write_annotations_csv(c.annotations));
        clips.push_back({{"path", base + ".csv"},
                         {"annotations", base + ".annotations.csv"},
                         {"name", c.name},
                         {"activity", std::string(activity_slug(c.activity))},
                         {"pair_id", c.pair_id},
                         {"fps", c.fps}});
    }
    json manifest{{"format", "handover-corpus"},
                  {"version", 1},
                  {"skeleton", skeleton_json(*corpus.skeleton)},
                  {"clips", clips}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Corpus load_corpus(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) throw IoError("no corpus manifest at " + manifest_path.string());
    json manifest;
    try {
        manifest = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw SchemaError("manifest: " + std::string(e.what()));
    }
    Corpus corpus;
    try {
        corpus.skeleton = std::make_shared<const Skeleton>(skeleton_from(manifest.at("skeleton")));
        for (const auto& entry : manifest.at("clips")) {
            MotionClip clip;
            clip.skeleton = corpus.skeleton;
            const auto path = entry.at("path").get<std::string>();
            clip.name = entry.value("name", std::filesystem::path(path).stem().string());
            clip.activity = parse_activity(entry.at("activity").get<std::string>());
            clip.pair_id = entry.at("pair_id").get<int>();
            clip.fps = entry.at("fps").get<double>();
            clip.frames = read_clip_csv(parse_csv(read_file(dir / path)), *corpus.skeleton);
            if (entry.contains("annotations")) {
                clip.annotations = load_annotations(
                    parse_csv(read_file(dir / entry.at("annotations").get<std::string>())), clip.frames.size(),
                    clip.fps);
            } else {
                clip.annotations.assign(clip.frames.size(), Annotation{});
            }
            check_clip(clip);
            corpus.clips.push_back(std::move(clip));
        }
    } catch (const json::exception& e) {
        throw SchemaError("manifest: " + std::string(e.what()));
    }
    return corpus;
}

}  // namespace handover
