#pragma once

// On-disk layout of a concept directory:
//
//   embedding.bin   plain-text header lines, a blank line, then dim little-endian float32 values
//   metadata.json   identity, constraints, negative history, lineage, training config
//   trace.csv       step,constraint,similarity
//   losses.csv      step,loss
//   segments/       segment images written by the adaptive-negatives hook (optional)

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "conceptforge/config.hpp"
#include "conceptforge/error.hpp"
#include "conceptforge/trainer.hpp"

namespace conceptforge {

inline constexpr std::string_view kEmbeddingMagic = "conceptforge-embedding 1";
inline constexpr std::string_view kArtifactFormat = "conceptforge-artifact/1";

inline void write_embedding(const std::filesystem::path& path, std::span<const double> values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StoreError("cannot write '" + path.string() + "'");
    out << kEmbeddingMagic << "\n"
        << "dim " << values.size() << "\n"
        << "dtype float32\n"
        << "byte_order little-endian\n\n";
    for (double v : values) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        const char bytes[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                               static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
        out.write(bytes, 4);
    }
    if (!out) throw StoreError("short write to '" + path.string() + "'");
}

inline Vec read_embedding(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StoreError("cannot open embedding file '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line != kEmbeddingMagic) throw StoreError("'" + path.string() + "' is not an embedding file");
    std::size_t dim = 0;
    bool little = false, f32 = false;
    while (std::getline(in, line) && !line.empty()) {
        std::istringstream ls(line);
        std::string key, value;
        ls >> key >> value;
        if (key == "dim") dim = std::stoul(value);
        else if (key == "dtype") f32 = value == "float32";
        else if (key == "byte_order") little = value == "little-endian";
    }
    if (dim == 0 || !little || !f32) throw StoreError("unsupported embedding header in '" + path.string() + "'");
    Vec out(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        unsigned char b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4)) throw StoreError("truncated embedding file '" + path.string() + "'");
        const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
        out[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw StoreError("trailing bytes in '" + path.string() + "'");
    return out;
}

namespace store_detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    return out + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline std::string number(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

} // namespace store_detail

inline void write_trace_csv(const std::filesystem::path& path, const SimilarityTrace& trace) {
    std::ofstream out(path);
    if (!out) throw StoreError("cannot write '" + path.string() + "'");
    out << "step,constraint,similarity\n";
    for (const auto& r : trace.records)
        out << r.step << ',' << store_detail::csv_field(r.constraint) << ',' << store_detail::number(r.similarity) << '\n';
}

inline SimilarityTrace read_trace_csv(const std::filesystem::path& path, const std::vector<std::string>& positives) {
    std::ifstream in(path);
    if (!in) throw StoreError("cannot open trace '" + path.string() + "'");
    SimilarityTrace trace;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = store_detail::csv_split(line);
        if (f.size() != 3) throw StoreError("malformed trace row '" + line + "'");
        TraceRecord r;
        r.step = std::stoul(f[0]);
        r.constraint = f[1];
        r.similarity = std::stod(f[2]);
        r.polarity = std::find(positives.begin(), positives.end(), r.constraint) != positives.end() ? Polarity::positive
                                                                                                   : Polarity::negative;
        trace.records.push_back(std::move(r));
    }
    return trace;
}

inline void save_artifact(const ConceptArtifact& art, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_embedding(dir / "embedding.bin", art.token.embedding);

    json history = json::array();
    for (const auto& e : art.history.entries) history.push_back({{"step", e.step}, {"word", e.word}, {"image", e.image_reference}});
    json parents = json::array();
    for (const auto& p : art.parents) parents.push_back({{"id", p.id}, {"weight", p.weight}});
    const json meta{{"format", kArtifactFormat},
                    {"id", art.id},
                    {"token_name", art.token.name},
                    {"category", art.token.category},
                    {"embedding_file", "embedding.bin"},
                    {"embedding_dim", art.token.embedding.size()},
                    {"positives", art.positives},
                    {"initial_negatives", art.initial_negatives},
                    {"final_negatives", art.final_negatives},
                    {"negative_history", history},
                    {"queries", art.queries},
                    {"parents", parents},
                    {"templates", art.templates},
                    {"training", to_json(art.config)},
                    {"trace_file", "trace.csv"},
                    {"losses_file", "losses.csv"}};
    std::ofstream(dir / "metadata.json") << meta.dump(2) << "\n";
    write_trace_csv(dir / "trace.csv", art.trace);

    std::ofstream negatives(dir / "negatives.csv");
    negatives << "step,word,image\n";
    for (const auto& e : art.history.entries)
        negatives << e.step << ',' << store_detail::csv_field(e.word) << ',' << store_detail::csv_field(e.image_reference) << '\n';

    std::ofstream losses(dir / "losses.csv");
    losses << "step,loss\n";
    for (std::size_t i = 0; i < art.losses.size(); ++i) losses << i + 1 << ',' << store_detail::number(art.losses[i]) << '\n';
    if (!losses) throw StoreError("cannot write losses for '" + dir.string() + "'");
}

inline ConceptArtifact load_artifact(const std::filesystem::path& dir) {
    const auto meta_path = dir / "metadata.json";
    std::ifstream in(meta_path);
    if (!in) throw StoreError("missing artifact: '" + meta_path.string() + "' not found");
    json meta;
    try {
        meta = json::parse(in);
    } catch (const json::exception& e) {
        throw StoreError("'" + meta_path.string() + "' is not valid JSON");
    }
    if (meta.value("format", "") != kArtifactFormat) throw StoreError("'" + meta_path.string() + "' has unknown format");

    ConceptArtifact art;
    try {
        art.id = meta.at("id").get<std::string>();
        art.token.name = meta.at("token_name").get<std::string>();
        art.token.category = meta.at("category").get<std::string>();
        art.positives = meta.at("positives").get<std::vector<std::string>>();
        art.initial_negatives = meta.at("initial_negatives").get<std::vector<std::string>>();
        art.final_negatives = meta.at("final_negatives").get<std::vector<std::string>>();
        for (const auto& e : meta.at("negative_history"))
            art.history.entries.push_back(
                {e.at("step").get<std::size_t>(), e.at("word").get<std::string>(), e.at("image").get<std::string>()});
        art.queries = meta.at("queries").get<std::size_t>();
        for (const auto& p : meta.at("parents")) art.parents.push_back({p.at("id").get<std::string>(), p.at("weight").get<double>()});
        art.templates = meta.at("templates").get<std::vector<std::string>>();
        art.config = training_from_json(meta.at("training"));
    } catch (const json::exception& e) {
        throw StoreError("'" + meta_path.string() + "': " + e.what());
    }
    art.token.embedding = read_embedding(dir / meta.value("embedding_file", "embedding.bin"));
    if (art.token.embedding.size() != meta.value("embedding_dim", art.token.embedding.size()))
        throw StoreError("embedding dimension disagrees with metadata in '" + dir.string() + "'");
    art.trace = read_trace_csv(dir / meta.value("trace_file", "trace.csv"), art.positives);

    std::ifstream losses(dir / meta.value("losses_file", "losses.csv"));
    std::string line;
    std::getline(losses, line);
    while (std::getline(losses, line))
        if (!line.empty()) art.losses.push_back(std::stod(store_detail::csv_split(line).at(1)));
    return art;
}

} // namespace conceptforge
