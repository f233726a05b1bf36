#include "ssa/io.hpp"

#include <bit>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "ssa/errors.hpp"

namespace ssa {

namespace {

constexpr char kFeatureMagic[4] = {'S', 'S', 'A', '1'};
constexpr char kModelMagic[4] = {'S', 'S', 'A', 'M'};
constexpr std::uint16_t kFormatVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8)
        out.push_back(static_cast<char>((v >> shift) & 0xff));
}

void put_f32(std::string& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

struct Cursor {
    const unsigned char* data;
    std::size_t size;
    std::size_t off = 0;

    void need(std::size_t n, const char* what) const {
        if (off + n > size)
            throw CorruptionError(std::string("truncated file while reading ") +
                                  what);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        const std::uint16_t v = static_cast<std::uint16_t>(
            data[off] | (static_cast<std::uint16_t>(data[off + 1]) << 8));
        off += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | data[off + static_cast<std::size_t>(i)];
        off += 4;
        return v;
    }
    float f32(const char* what) {
        return std::bit_cast<float>(u32(what));
    }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data + off), n);
        off += n;
        return s;
    }
};

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("read failure on " + path);
    return buf.str();
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failure on " + path);
}

void append_feature_record(std::string& out, const DenseMatrix& m) {
    if (m.rows() > UINT32_MAX || m.cols() > UINT32_MAX)
        throw InvalidInputError("feature record too large for format");
    for (double v : m.values())
        if (!std::isfinite(v) || std::abs(v) > static_cast<double>(FLT_MAX))
            throw InvalidInputError("value not representable as f32");
    out.append(kFeatureMagic, 4);
    put_u16(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.values()) put_f32(out, static_cast<float>(v));
}

DenseMatrix parse_feature_record(Cursor& cur) {
    const std::string magic = cur.bytes(4, "magic");
    if (std::string(kFeatureMagic, 4) != magic)
        throw FormatError("bad magic, not a feature file");
    const std::uint16_t version = cur.u16("version");
    if (version != kFormatVersion)
        throw FormatError("unsupported feature file version " +
                          std::to_string(version));
    const std::uint32_t rows = cur.u32("row count");
    const std::uint32_t cols = cur.u32("column count");
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    const std::size_t avail = cur.size - cur.off;
    if (avail / 4 < n)
        throw CorruptionError(
            "payload needs " +
            std::to_string(static_cast<unsigned long long>(n) * 4ull) +
            " bytes, " + std::to_string(avail) + " available");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        const float v = cur.f32("payload");
        if (!std::isfinite(v))
            throw CorruptionError("non-finite value in payload");
        values[i] = static_cast<double>(v);
    }
    return DenseMatrix(rows, cols, std::move(values));
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

DenseMatrix expect_section(Cursor& cur, const std::string& name) {
    const std::uint16_t name_len = cur.u16("section name length");
    const std::string found = cur.bytes(name_len, "section name");
    if (found != name)
        throw FormatError("expected section '" + name + "', found '" + found +
                          "'");
    return parse_feature_record(cur);
}

void append_section(std::string& out, const std::string& name,
                    const DenseMatrix& m) {
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
    append_feature_record(out, m);
}

DenseMatrix row_matrix(const std::vector<double>& v) {
    return DenseMatrix(1, v.size(), v);
}

} // namespace

DenseMatrix read_feature_file(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    Cursor cur{reinterpret_cast<const unsigned char*>(bytes.data()),
               bytes.size()};
    DenseMatrix m = parse_feature_record(cur);
    if (cur.off != cur.size)
        throw CorruptionError("expected " + std::to_string(cur.off) +
                              " bytes, file has " + std::to_string(cur.size));
    return m;
}

void write_feature_file(const std::string& path, const DenseMatrix& matrix) {
    std::string out;
    out.reserve(14 + matrix.rows() * matrix.cols() * 4);
    append_feature_record(out, matrix);
    write_file_bytes(path, out);
}

ModelParams read_model_params(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    Cursor cur{reinterpret_cast<const unsigned char*>(bytes.data()),
               bytes.size()};
    if (std::string(kModelMagic, 4) != cur.bytes(4, "magic"))
        throw FormatError("bad magic, not a model file");
    if (cur.u16("version") != kFormatVersion)
        throw FormatError("unsupported model file version");
    const std::uint16_t activation = cur.u16("activation");
    if (activation > 1) throw FormatError("unknown activation code");
    const std::uint16_t flags = cur.u16("flags");
    const std::uint16_t mlp_count = cur.u16("mlp count");
    if (mlp_count == 0) throw FormatError("model file has no MLP sections");
    const std::uint32_t section_count = cur.u32("section count");
    if (section_count != 1u + 4u * mlp_count + 2u)
        throw FormatError("section count does not match MLP count");

    ModelParams params;
    params.residual = (flags & 1u) != 0;
    params.gate.weight = expect_section(cur, "gate");
    params.slot_mlps.resize(mlp_count);
    for (std::uint16_t i = 0; i < mlp_count; ++i) {
        const std::string prefix = "mlp" + std::to_string(i);
        SlotMlpParams& mlp = params.slot_mlps[i];
        mlp.activation =
            activation == 0 ? Activation::identity : Activation::gelu;
        mlp.w1 = expect_section(cur, prefix + ".w1");
        DenseMatrix b1 = expect_section(cur, prefix + ".b1");
        mlp.w2 = expect_section(cur, prefix + ".w2");
        DenseMatrix b2 = expect_section(cur, prefix + ".b2");
        if (b1.rows() != 1 || b2.rows() != 1)
            throw FormatError("bias section must be a single row");
        mlp.b1.assign(b1.values().begin(), b1.values().end());
        mlp.b2.assign(b2.values().begin(), b2.values().end());
    }
    params.head.weight = expect_section(cur, "head.w");
    DenseMatrix hb = expect_section(cur, "head.b");
    if (hb.rows() != 1)
        throw FormatError("bias section must be a single row");
    params.head.bias.assign(hb.values().begin(), hb.values().end());
    if (cur.off != cur.size)
        throw CorruptionError("trailing bytes after last section");
    return params;
}

void write_model_params(const std::string& path, const ModelParams& params) {
    if (params.slot_mlps.empty())
        throw InvalidInputError("write_model_params: no MLP parameters");
    std::string out;
    out.append(kModelMagic, 4);
    put_u16(out, kFormatVersion);
    const Activation act = params.slot_mlps.front().activation;
    put_u16(out, act == Activation::identity ? 0 : 1);
    put_u16(out, params.residual ? 1 : 0);
    put_u16(out, static_cast<std::uint16_t>(params.slot_mlps.size()));
    put_u32(out,
            static_cast<std::uint32_t>(1 + 4 * params.slot_mlps.size() + 2));
    append_section(out, "gate", params.gate.weight);
    for (std::size_t i = 0; i < params.slot_mlps.size(); ++i) {
        const std::string prefix = "mlp" + std::to_string(i);
        const SlotMlpParams& mlp = params.slot_mlps[i];
        append_section(out, prefix + ".w1", mlp.w1);
        append_section(out, prefix + ".b1", row_matrix(mlp.b1));
        append_section(out, prefix + ".w2", mlp.w2);
        append_section(out, prefix + ".b2", row_matrix(mlp.b2));
    }
    append_section(out, "head.w", params.head.weight);
    append_section(out, "head.b", row_matrix(params.head.bias));
    write_file_bytes(path, out);
}

void write_assignments(const std::string& path, const RoutingTable& table) {
    std::string out;
    for (std::size_t j = 0; j < table.n_patches; ++j) {
        out += std::to_string(j);
        for (std::size_t t = 0; t < table.top_k; ++t) {
            out += ',';
            out += std::to_string(table.slot(j, t));
            out += ',';
            out += fmt_g(table.weight(j, t));
        }
        out += '\n';
    }
    write_file_bytes(path, out);
}

void write_train_report(std::ostream& out, const TrainReport& report) {
    const TrainConfig& cfg = report.config;
    out << "train_report_v1\n";
    out << "seed=" << report.seed << '\n';
    out << "slots=" << cfg.n_slots << '\n';
    out << "top_k=" << cfg.top_k << '\n';
    out << "hidden_dim=" << cfg.hidden_dim << '\n';
    out << "out_dim=" << cfg.out_dim << '\n';
    out << "classes=" << cfg.n_classes << '\n';
    out << "lr=" << fmt_g(cfg.lr) << '\n';
    out << "batch=" << cfg.batch_size << '\n';
    out << "epochs=" << cfg.epochs << '\n';
    out << "lambda=" << fmt_g(cfg.constants.lambda) << '\n';
    out << "shared_mlp=" << (cfg.shared_mlp ? 1 : 0) << '\n';
    out << "residual=" << (cfg.residual ? 1 : 0) << '\n';

    const auto record_line = [&out](const std::string& head,
                                    const EpochRecord& rec) {
        out << head << " task=" << fmt_g(rec.loss.task)
            << " switch=" << fmt_g(rec.loss.switch_loss)
            << " ent=" << fmt_g(rec.loss.entropy)
            << " z=" << fmt_g(rec.loss.z)
            << " total=" << fmt_g(rec.loss.total)
            << " max_load=" << fmt_g(rec.max_load) << " load=";
        for (std::size_t k = 0; k < rec.stats.load.size(); ++k) {
            if (k > 0) out << ',';
            out << fmt_g(rec.stats.load[k]);
        }
        out << '\n';
    };

    record_line("init", report.init);
    for (std::size_t e = 0; e < report.epochs.size(); ++e)
        record_line("epoch=" + std::to_string(e + 1), report.epochs[e]);

    out << "final val_accuracy=" << fmt_g(report.final_val_accuracy)
        << " test_accuracy=" << fmt_g(report.final_test_accuracy)
        << " max_load=" << fmt_g(report.final_max_load) << '\n';
    out << "diverged=" << (report.diverged ? 1 : 0) << '\n';
}

void write_train_report(const std::string& path, const TrainReport& report) {
    std::ostringstream buf;
    write_train_report(buf, report);
    write_file_bytes(path, buf.str());
}

} // namespace ssa
