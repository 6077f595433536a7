#include "boxdiff/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace boxdiff {

namespace {

constexpr const char* kMagic = "boxdiffckpt";
constexpr int kVersion = 1;

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
    out << name << " " << t.shape.size();
    for (auto d : t.shape) out << " " << d;
    out << "\n";
    char buf[32];
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", t.data[i]);
        out << buf << (i + 1 == t.data.size() ? "" : " ");
    }
    out << "\n";
}

Tensor read_tensor(std::istream& in, std::string& name) {
    std::size_t ndim = 0;
    if (!(in >> name >> ndim)) throw std::runtime_error("checkpoint: truncated tensor header");
    std::vector<std::int64_t> shape(ndim);
    for (auto& d : shape) {
        if (!(in >> d)) throw std::runtime_error("checkpoint: truncated shape for " + name);
    }
    Tensor t(shape);
    for (auto& v : t.data) {
        if (!(in >> v)) throw std::runtime_error("checkpoint: truncated data for " + name);
    }
    return t;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << kMagic << " " << kVersion << "\n";
    out << "step " << store.step << "\n";
    out << "tensors " << store.params.size() * 3 << "\n";
    for (const auto& [name, p] : store.params) {
        write_tensor(out, name, p.value);
        write_tensor(out, name + "::m", p.m);
        write_tensor(out, name + "::v", p.v);
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ParamStore load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kMagic) {
        throw std::runtime_error("load_checkpoint: not a checkpoint file: " + path);
    }
    if (version != kVersion) {
        throw std::runtime_error("load_checkpoint: unsupported version in " + path);
    }
    std::string key;
    std::int64_t step = 0;
    std::size_t count = 0;
    if (!(in >> key >> step) || key != "step") {
        throw std::runtime_error("load_checkpoint: missing step record in " + path);
    }
    if (!(in >> key >> count) || key != "tensors") {
        throw std::runtime_error("load_checkpoint: missing tensor count in " + path);
    }

    ParamStore store;
    store.step = step;
    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        Tensor t = read_tensor(in, name);
        const auto sep = name.find("::");
        if (sep == std::string::npos) {
            store.add(name, std::move(t));
        } else {
            const std::string base = name.substr(0, sep);
            const std::string kind = name.substr(sep + 2);
            Param& p = store.get(base);
            if (!t.same_shape(p.value)) {
                throw std::runtime_error("load_checkpoint: moment shape mismatch for " + base);
            }
            if (kind == "m") {
                p.m = std::move(t);
            } else if (kind == "v") {
                p.v = std::move(t);
            } else {
                throw std::runtime_error("load_checkpoint: unknown record " + name);
            }
        }
    }
    return store;
}

}  // namespace boxdiff
