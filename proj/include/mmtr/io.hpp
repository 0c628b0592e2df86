#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include <mmtr/aecm.hpp>
#include <mmtr/model.hpp>

namespace mmtr {

struct IoError : Error
{
    using Error::Error;
};

struct FormatError : Error
{
    using Error::Error;
};

inline constexpr int model_format_version = 1;

// Shortest representation that reads back to the same double.
inline std::string fmt(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw FormatError("not a number: '" + std::string(s) + "'");
    }
    return v;
}

/// Writes through a temporary file in the same directory and renames it over
/// the target, so readers never observe a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            out.close();
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("write to '" + tmp.string() + "' failed");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename onto '" + path.string() + "'");
    }
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::filesystem::path meta_path(const std::filesystem::path& csv)
{
    auto m = csv;
    m += ".meta.json";
    return m;
}

// ---- dataset -------------------------------------------------------------

inline std::string dataset_csv(const TraceDataset& d)
{
    std::string s = "group_id,y";
    for (Eigen::Index k = 1; k <= d.dims.p(); ++k) s += ",x_" + std::to_string(k);
    for (Eigen::Index k = 1; k <= d.dims.q(); ++k) s += ",z_" + std::to_string(k);
    s += '\n';
    for (const auto& g : d.groups) {
        for (Eigen::Index j = 0; j < g.size(); ++j) {
            s += g.id;
            s += ',';
            s += fmt(g.y[j]);
            for (Eigen::Index k = 0; k < g.x_rows.cols(); ++k) {
                s += ',';
                s += fmt(g.x_rows(j, k));
            }
            for (Eigen::Index k = 0; k < g.z_rows_1.cols(); ++k) {
                s += ',';
                s += fmt(g.z_rows_1(j, k));
            }
            s += '\n';
        }
    }
    return s;
}

inline std::string dims_json(const Dims& dims)
{
    nlohmann::ordered_json j;
    j["p1"] = dims.p1;
    j["p2"] = dims.p2;
    j["q1"] = dims.q1;
    j["q2"] = dims.q2;
    return j.dump(2) + "\n";
}

inline void write_dataset(const std::filesystem::path& csv, const TraceDataset& d)
{
    atomic_write(meta_path(csv), dims_json(d.dims));
    atomic_write(csv, dataset_csv(d));
}

inline Dims read_dims(const std::filesystem::path& meta)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(meta));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + meta.string() + "': " + e.what());
    }
    Dims d;
    try {
        d.p1 = j.at("p1").get<Eigen::Index>();
        d.p2 = j.at("p2").get<Eigen::Index>();
        d.q1 = j.at("q1").get<Eigen::Index>();
        d.q2 = j.at("q2").get<Eigen::Index>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + meta.string() + "': " + e.what());
    }
    if (d.p1 < 1 || d.p2 < 1 || d.q1 < 1 || d.q2 < 1) throw FormatError("'" + meta.string() + "': dims must be >= 1");
    return d;
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

} // namespace detail

/// Parses dataset CSV text. Groups keep their order of first appearance;
/// rows of a group need not be contiguous.
inline TraceDataset parse_dataset(const std::string& text, const Dims& dims)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("dataset is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_csv(line);
    const auto p = dims.p(), q = dims.q();
    const auto width = static_cast<std::size_t>(2 + p + q);
    if (header.size() != width) {
        throw FormatError("header has " + std::to_string(header.size()) + " columns, dims imply "
                          + std::to_string(width));
    }
    if (header[0] != "group_id" || header[1] != "y") throw FormatError("header must start with group_id,y");
    for (Eigen::Index k = 0; k < p; ++k) {
        if (header[static_cast<std::size_t>(2 + k)] != "x_" + std::to_string(k + 1)) throw FormatError("bad x column names");
    }
    for (Eigen::Index k = 0; k < q; ++k) {
        if (header[static_cast<std::size_t>(2 + p + k)] != "z_" + std::to_string(k + 1)) throw FormatError("bad z column names");
    }

    struct Rows
    {
        std::string id;
        std::vector<double> y, x, z;
    };
    std::vector<Rows> groups;
    std::unordered_map<std::string, std::size_t> index;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != width) {
            throw FormatError("line " + std::to_string(lineno) + ": expected " + std::to_string(width) + " columns");
        }
        const std::string id(cells[0]);
        if (id.empty()) throw FormatError("line " + std::to_string(lineno) + ": empty group_id");
        auto [it, added] = index.emplace(id, groups.size());
        if (added) groups.push_back({id, {}, {}, {}});
        auto& g = groups[it->second];
        try {
            g.y.push_back(parse_double(cells[1]));
            for (Eigen::Index k = 0; k < p; ++k) g.x.push_back(parse_double(cells[static_cast<std::size_t>(2 + k)]));
            for (Eigen::Index k = 0; k < q; ++k) g.z.push_back(parse_double(cells[static_cast<std::size_t>(2 + p + k)]));
        } catch (const FormatError& e) {
            throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    TraceDataset d;
    d.dims = dims;
    for (auto& g : groups) {
        const auto m = static_cast<Eigen::Index>(g.y.size());
        using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        Vec y = Eigen::Map<const Vec>(g.y.data(), m);
        Mat x = Eigen::Map<const RowMat>(g.x.data(), m, p);
        Mat z = Eigen::Map<const RowMat>(g.z.data(), m, q);
        d.groups.push_back(make_group(g.id, std::move(y), std::move(x), std::move(z), dims));
    }
    if (d.groups.empty()) throw FormatError("dataset has no rows");
    return d;
}

inline TraceDataset read_dataset(const std::filesystem::path& csv)
{
    const auto dims = read_dims(meta_path(csv));
    return parse_dataset(read_file(csv), dims);
}

// ---- model ---------------------------------------------------------------

struct ModelFile
{
    Dims dims;
    ModelParams params;
    std::array<Eigen::Index, 2> selected_ranks{0, 0};
    std::optional<double> ebic;
    nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
};

namespace detail {

inline nlohmann::ordered_json rows_json(const Mat& m)
{
    auto out = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = nlohmann::ordered_json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(std::move(row));
    }
    return out;
}

inline Mat rows_mat(const nlohmann::json& j, Eigen::Index rows, const std::string& name)
{
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
        throw FormatError(name + ": expected " + std::to_string(rows) + " rows");
    }
    const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& r = j[static_cast<std::size_t>(i)];
        if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols) throw FormatError(name + ": ragged rows");
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = r[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

} // namespace detail

inline std::string model_json(const ModelFile& f)
{
    nlohmann::ordered_json j;
    j["format_version"] = model_format_version;
    j["dims"] = {{"p1", f.dims.p1}, {"p2", f.dims.p2}, {"q1", f.dims.q1}, {"q2", f.dims.q2}};
    j["B"] = detail::rows_json(f.params.b_mat);
    j["L1"] = detail::rows_json(f.params.l1);
    j["L2"] = detail::rows_json(f.params.l2);
    j["tau2"] = f.params.tau2;
    j["selected_ranks"] = {f.selected_ranks[0], f.selected_ranks[1]};
    j["ebic"] = f.ebic ? nlohmann::ordered_json(*f.ebic) : nlohmann::ordered_json(nullptr);
    j["metadata"] = f.metadata;
    return j.dump(2) + "\n";
}

inline ModelFile parse_model(const std::string& text)
{
    ModelFile f;
    try {
        const auto j = nlohmann::ordered_json::parse(text);
        const int version = j.at("format_version").get<int>();
        if (version != model_format_version) throw FormatError("unsupported format_version " + std::to_string(version));
        const auto& dm = j.at("dims");
        f.dims = {dm.at("p1").get<Eigen::Index>(), dm.at("p2").get<Eigen::Index>(), dm.at("q1").get<Eigen::Index>(),
                  dm.at("q2").get<Eigen::Index>()};
        f.params.b_mat = detail::rows_mat(j.at("B"), f.dims.p1, "B");
        if (f.params.b_mat.cols() != f.dims.p2) throw FormatError("B: expected " + std::to_string(f.dims.p2) + " columns");
        f.params.l1 = detail::rows_mat(j.at("L1"), f.dims.q1, "L1");
        f.params.l2 = detail::rows_mat(j.at("L2"), f.dims.q2, "L2");
        f.params.tau2 = j.at("tau2").get<double>();
        if (!(f.params.tau2 > 0.0)) throw FormatError("tau2 must be > 0");
        const auto& r = j.at("selected_ranks");
        f.selected_ranks = {r.at(0).get<Eigen::Index>(), r.at(1).get<Eigen::Index>()};
        if (!j.at("ebic").is_null()) f.ebic = j.at("ebic").get<double>();
        if (j.contains("metadata")) f.metadata = j.at("metadata");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model file: ") + e.what());
    }
    return f;
}

inline void write_model(const std::filesystem::path& path, const ModelFile& f)
{
    atomic_write(path, model_json(f));
}

inline ModelFile read_model(const std::filesystem::path& path)
{
    return parse_model(read_file(path));
}

inline ModelFile model_file(const Dims& dims, const FitReport& r)
{
    ModelFile f;
    f.dims = dims;
    f.params = r.params;
    f.selected_ranks = r.selected_ranks;
    f.ebic = r.ebic;
    auto& m = f.metadata;
    m["iterations"] = r.iterations;
    m["converged"] = r.converged;
    m["solver_converged"] = r.solver_converged;
    m["seed"] = r.seed;
    m["lambda_b"] = r.lambda_b;
    m["lambda_l"] = r.lambda_l;
    m["loglik"] = r.loglik;
    m["df"] = r.df;
    m["initial_ranks"] = {r.initial_ranks[0], r.initial_ranks[1]};
    return f;
}

inline std::string trace_csv(const FitReport& r)
{
    std::string s = "iteration,cycle,objective,loglik,rank1,rank2\n";
    for (const auto& t : r.trace) {
        s += std::to_string(t.iteration) + ',' + std::to_string(t.cycle) + ',' + fmt(t.objective) + ','
            + fmt(t.loglik) + ',' + std::to_string(t.rank1) + ',' + std::to_string(t.rank2) + '\n';
    }
    return s;
}

inline std::string grid_csv(const TuneResult& t)
{
    std::string s = "lambda_b,lambda_l,score,ebic,loglik,df,rank1,rank2,iterations,status,selected\n";
    for (std::size_t c = 0; c < t.table.size(); ++c) {
        const auto& g = t.table[c];
        s += fmt(g.lambda_b) + ',' + fmt(g.lambda_l) + ',' + fmt(g.score) + ',' + fmt(g.ebic) + ',' + fmt(g.loglik)
            + ',' + std::to_string(g.df) + ',' + std::to_string(g.rank1) + ',' + std::to_string(g.rank2) + ','
            + std::to_string(g.iterations) + ',' + g.status + ',' + (c == t.best_index ? "1" : "0") + '\n';
    }
    return s;
}

} // namespace mmtr
