#include "handover/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "handover/error.hpp"

namespace handover {
namespace {

constexpr char kMagic[8] = {'H', 'O', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof(v)); }

}  // namespace

Checkpoint make_checkpoint(std::string model_type, nlohmann::json config, const nn::ParameterStore& store,
                           std::string training_log_csv) {
    Checkpoint c;
    c.model_type = std::move(model_type);
    c.config = std::move(config);
    c.training_log_csv = std::move(training_log_csv);
    for (const auto& p : store.all()) c.tensors.emplace_back(p.name, p.value);
    return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    nlohmann::json header;
    header["model_type"] = checkpoint.model_type;
    header["config"] = checkpoint.config;
    header["training_log"] = checkpoint.training_log_csv;
    auto table = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, m] : checkpoint.tensors) {
        table.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(m.size()) * sizeof(float);
    }
    header["tensors"] = table;
    const std::string text = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint '" + path.string() + "'");
    os.write(kMagic, sizeof(kMagic));
    write_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::vector<float> buf;
    for (const auto& [name, m] : checkpoint.tensors) {
        buf.resize(static_cast<std::size_t>(m.size()));
        std::size_t k = 0;
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) buf[k++] = static_cast<float>(m(r, c));
        os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!os) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint '" + path.string() + "'");
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ParseError(0, "'" + path.string() + "' is not a checkpoint file");
    std::uint64_t len = 0;
    is.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!is || len > (1ULL << 32)) throw ParseError(0, "checkpoint header length is corrupt");
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    if (!is) throw ParseError(0, "checkpoint header is truncated");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("checkpoint header: ") + e.what());
    }
    Checkpoint c;
    try {
        c.model_type = header.at("model_type").get<std::string>();
        c.config = header.at("config");
        c.training_log_csv = header.at("training_log").get<std::string>();
        std::vector<float> buf;
        for (const auto& t : header.at("tensors")) {
            const auto rows = t.at("shape").at(0).get<Eigen::Index>();
            const auto cols = t.at("shape").at(1).get<Eigen::Index>();
            if (rows < 0 || cols < 0) throw ParseError(0, "negative tensor shape");
            buf.resize(static_cast<std::size_t>(rows * cols));
            is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
            if (!is) throw ParseError(0, "checkpoint tensor data is truncated");
            nn::Matrix m(rows, cols);
            std::size_t k = 0;
            for (Eigen::Index r = 0; r < rows; ++r)
                for (Eigen::Index col = 0; col < cols; ++col) m(r, col) = static_cast<double>(buf[k++]);
            c.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("checkpoint header: ") + e.what());
    }
    return c;
}

void restore_parameters(const Checkpoint& checkpoint, nn::ParameterStore& store) {
    std::map<std::string, const nn::Matrix*> by_name;
    for (const auto& [name, m] : checkpoint.tensors) by_name[name] = &m;
    if (by_name.size() != store.size())
        throw ConsistencyError("checkpoint holds " + std::to_string(by_name.size()) + " tensors, model expects " +
                               std::to_string(store.size()));
    for (auto& p : store.all()) {
        const auto it = by_name.find(p.name);
        if (it == by_name.end()) throw ConsistencyError("checkpoint lacks tensor '" + p.name + "'");
        if (it->second->rows() != p.value.rows() || it->second->cols() != p.value.cols())
            throw ConsistencyError("tensor '" + p.name + "' has a different shape in the checkpoint");
        p.value = *it->second;
        p.grad.setZero();
        p.adam_m.setZero();
        p.adam_v.setZero();
    }
}

}  // namespace handover
