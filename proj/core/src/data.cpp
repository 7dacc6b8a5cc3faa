#include "fllab/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>

#include "fllab/error.hpp"
#include "fllab/rng.hpp"

namespace fllab::data {

namespace {

constexpr int kMaxAttempts = 100;
constexpr std::array<char, 5> kMagic{'F', 'L', 'D', 'S', '1'};

std::vector<std::vector<std::size_t>> indices_by_label(const Dataset& ds) {
    std::vector<std::vector<std::size_t>> out(ds.num_classes);
    for (std::size_t i = 0; i < ds.labels.size(); ++i) out[ds.labels[i]].push_back(i);
    return out;
}

bool any_empty(const Partition& p) {
    return std::any_of(p.client_indices.begin(), p.client_indices.end(),
                       [](const auto& v) { return v.empty(); });
}

void put_u32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                                static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    os.write(b.data(), b.size());
}

void put_u64(std::ostream& os, std::uint64_t v) {
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b.data(), b.size());
}

template <std::size_t N>
std::array<unsigned char, N> get_bytes(std::istream& is) {
    std::array<unsigned char, N> b{};
    is.read(reinterpret_cast<char*>(b.data()), N);
    if (!is) throw IoError("dataset file truncated");
    return b;
}

std::uint64_t le_value(std::span<const unsigned char> b) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < b.size(); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

Dataset synth_classification(std::size_t total, std::size_t dim, std::size_t classes, double margin,
                             std::uint64_t seed) {
    if (classes < 1 || total < classes || dim < classes) {
        throw ShapeError("synth_classification: need total >= classes >= 1 and dim >= classes");
    }
    if (classes > 65536) throw ShapeError("synth_classification: too many classes for 16-bit labels");
    Rng rng(seed);
    Dataset ds;
    ds.num_classes = classes;
    ds.labels.resize(total);
    for (std::size_t i = 0; i < total; ++i) ds.labels[i] = static_cast<Label>(i % classes);
    rng.shuffle(std::span<Label>(ds.labels));
    ds.features = Matrix(total, dim);
    for (std::size_t i = 0; i < total; ++i) {
        auto row = ds.features.row(i);
        for (double& v : row) v = rng.normal();
        row[ds.labels[i]] += margin;
    }
    return ds;
}

Partition partition_dirichlet(const Dataset& ds, std::size_t clients, double alpha, std::uint64_t seed) {
    if (clients < 1) throw PartitionError("partition_dirichlet: need at least one client");
    if (!(alpha > 0.0)) throw PartitionError("partition_dirichlet: alpha must be positive");
    Rng rng(seed);
    const auto by_label = indices_by_label(ds);
    std::vector<double> log_g(clients);
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Partition p;
        p.client_indices.resize(clients);
        for (auto idx : by_label) {
            rng.shuffle(std::span<std::size_t>(idx));
            // Normalize in log space so tiny alphas never produce 0/0.
            double mx = -INFINITY;
            for (auto& g : log_g) {
                g = rng.log_gamma_draw(alpha);
                mx = std::max(mx, g);
            }
            double sum = 0.0;
            for (auto& g : log_g) {
                g = std::exp(g - mx);
                sum += g;
            }
            double cum = 0.0;
            std::size_t begin = 0;
            for (std::size_t c = 0; c < clients; ++c) {
                cum += log_g[c] / sum;
                std::size_t end = c + 1 == clients
                                      ? idx.size()
                                      : std::min(idx.size(), static_cast<std::size_t>(
                                                                 std::llround(cum * static_cast<double>(idx.size()))));
                end = std::max(end, begin);
                p.client_indices[c].insert(p.client_indices[c].end(), idx.begin() + begin, idx.begin() + end);
                begin = end;
            }
        }
        if (!any_empty(p)) {
            for (auto& v : p.client_indices) std::sort(v.begin(), v.end());
            return p;
        }
    }
    throw PartitionError("partition_dirichlet: could not give every client data after " +
                         std::to_string(kMaxAttempts) + " draws");
}

Partition partition_labels(const Dataset& ds, std::size_t clients, std::size_t labels_per_client,
                           std::uint64_t seed) {
    const std::size_t classes = ds.num_classes;
    if (clients < 1) throw PartitionError("partition_labels: need at least one client");
    if (labels_per_client < 1 || labels_per_client > classes) {
        throw PartitionError("partition_labels: labels_per_client must be in [1, num_classes]");
    }
    if (clients * labels_per_client < classes) {
        throw PartitionError("partition_labels: " + std::to_string(clients) + " clients with " +
                             std::to_string(labels_per_client) + " labels each cannot cover " +
                             std::to_string(classes) + " labels");
    }
    Rng rng(seed);
    const auto by_label = indices_by_label(ds);
    std::vector<std::size_t> pool(classes);
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        std::vector<std::vector<std::size_t>> holders(classes);
        for (std::size_t c = 0; c < clients; ++c) {
            std::iota(pool.begin(), pool.end(), std::size_t{0});
            for (std::size_t j = 0; j < labels_per_client; ++j) {
                const auto pick = j + static_cast<std::size_t>(rng.below(classes - j));
                std::swap(pool[j], pool[pick]);
                holders[pool[j]].push_back(c);
            }
        }
        bool feasible = true;
        for (std::size_t l = 0; l < classes; ++l)
            if (holders[l].empty() || by_label[l].size() < holders[l].size()) feasible = false;
        if (!feasible) continue;

        Partition p;
        p.client_indices.resize(clients);
        for (std::size_t l = 0; l < classes; ++l) {
            auto idx = by_label[l];
            rng.shuffle(std::span<std::size_t>(idx));
            const std::size_t h = holders[l].size();
            for (std::size_t s = 0; s < h; ++s) {
                const std::size_t begin = s * idx.size() / h;
                const std::size_t end = (s + 1) * idx.size() / h;
                auto& dst = p.client_indices[holders[l][s]];
                dst.insert(dst.end(), idx.begin() + begin, idx.begin() + end);
            }
        }
        for (auto& v : p.client_indices) std::sort(v.begin(), v.end());
        return p;
    }
    throw PartitionError("partition_labels: no feasible label assignment after " + std::to_string(kMaxAttempts) +
                         " draws");
}

Partition partition_iid(const Dataset& ds, std::size_t clients, std::uint64_t seed) {
    if (clients < 1 || clients > ds.size()) throw PartitionError("partition_iid: need 1 <= clients <= samples");
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    Partition p;
    p.client_indices.resize(clients);
    for (std::size_t i = 0; i < order.size(); ++i) p.client_indices[i % clients].push_back(order[i]);
    for (auto& v : p.client_indices) std::sort(v.begin(), v.end());
    return p;
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ShapeError("subset: no indices");
    Dataset out;
    out.num_classes = ds.num_classes;
    out.features = Matrix(indices.size(), ds.dim());
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = ds.features.row(indices[i]);
        std::copy(src.begin(), src.end(), out.features.row(i).begin());
        out.labels.push_back(ds.labels[indices[i]]);
    }
    return out;
}

Split holdout(const Dataset& ds, std::size_t test_count, std::uint64_t seed) {
    if (test_count < 1 || test_count >= ds.size()) throw ShapeError("holdout: need 1 <= test_count < samples");
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    const std::size_t train_count = ds.size() - test_count;
    std::span<const std::size_t> all(order);
    return Split{subset(ds, all.first(train_count)), subset(ds, all.subspan(train_count))};
}

std::vector<std::size_t> label_histogram(const Dataset& ds, std::span<const std::size_t> indices) {
    std::vector<std::size_t> h(ds.num_classes, 0);
    for (std::size_t i : indices) ++h[ds.labels[i]];
    return h;
}

void validate_partition(const Partition& p, std::size_t total) {
    std::vector<char> seen(total, 0);
    std::size_t count = 0;
    for (std::size_t c = 0; c < p.clients(); ++c) {
        if (p.client_indices[c].empty()) throw PartitionError("client " + std::to_string(c) + " has no data");
        for (std::size_t i : p.client_indices[c]) {
            if (i >= total) throw PartitionError("index out of range");
            if (seen[i]) throw PartitionError("index " + std::to_string(i) + " assigned twice");
            seen[i] = 1;
            ++count;
        }
    }
    if (count != total) throw PartitionError("partition does not cover every sample");
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(kMagic.data(), kMagic.size());
    put_u32(os, static_cast<std::uint32_t>(ds.size()));
    put_u32(os, static_cast<std::uint32_t>(ds.dim()));
    put_u32(os, static_cast<std::uint32_t>(ds.num_classes));
    for (double v : ds.features.data()) put_u64(os, std::bit_cast<std::uint64_t>(v));
    for (Label l : ds.labels) {
        const std::array<char, 2> b{static_cast<char>(l & 0xFF), static_cast<char>(l >> 8)};
        os.write(b.data(), b.size());
    }
    os.flush();
    if (!os) throw IoError("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    const auto magic = get_bytes<5>(is);
    if (std::memcmp(magic.data(), kMagic.data(), kMagic.size()) != 0) {
        throw IoError(path.string() + " is not an FLDS1 file");
    }
    const auto total = static_cast<std::size_t>(le_value(get_bytes<4>(is)));
    const auto dim = static_cast<std::size_t>(le_value(get_bytes<4>(is)));
    const auto classes = static_cast<std::size_t>(le_value(get_bytes<4>(is)));
    if (total == 0 || dim == 0 || classes == 0) throw IoError("dataset header has a zero dimension");
    Dataset ds;
    ds.num_classes = classes;
    ds.features = Matrix(total, dim);
    for (double& v : ds.features.data()) v = std::bit_cast<double>(le_value(get_bytes<8>(is)));
    ds.labels.resize(total);
    for (Label& l : ds.labels) {
        l = static_cast<Label>(le_value(get_bytes<2>(is)));
        if (l >= classes) throw IoError("dataset label out of range");
    }
    return ds;
}

}  // namespace fllab::data
