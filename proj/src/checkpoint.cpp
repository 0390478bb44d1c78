#include "rmsnet/checkpoint.hpp"

#include <fstream>

#include "rmsnet/binary_io.hpp"

namespace rmsnet {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

} // namespace

void save_checkpoint(const RmsNetConfig& config, const RmsNetParams<float>& params,
                     const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    RMSNET_REQUIRE(os.good(), Io, "cannot write ", path.string());
    os.write("RMSN", 4);
    io::write_u32(os, kCheckpointVersion);
    for (Index v : {config.feature_dim, config.clip_len, config.fc1_dim, config.conv1_dim,
                    config.conv2_dim, config.fc2_dim, config.num_classes, config.kernel_size})
        io::write_u32(os, static_cast<std::uint32_t>(v));
    io::write_f64(os, config.dropout);
    io::write_f64(os, config.lambda);
    io::write_u32(os, (config.activations ? 1u : 0u) | (config.fc2_activation ? 2u : 0u));
    io::write_u32(os, static_cast<std::uint32_t>(kParamNames.size()));
    params.for_each([&](std::string_view, const MatrixF& m) {
        io::write_u32(os, static_cast<std::uint32_t>(m.rows()));
        io::write_u32(os, static_cast<std::uint32_t>(m.cols()));
        io::write_floats(os, m.data(), static_cast<std::size_t>(m.size()));
    });
    RMSNET_REQUIRE(os.good(), Io, "failed writing ", path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    RMSNET_REQUIRE(is.good(), Io, "cannot open checkpoint ", path.string());
    const std::string what = path.string();
    io::expect_magic(is, "RMSN", what);
    const auto version = io::read_u32(is, what);
    RMSNET_REQUIRE(version == kCheckpointVersion, Format, what, ": unsupported version ", version);

    Checkpoint ck;
    RmsNetConfig& c = ck.config;
    for (Index* v : {&c.feature_dim, &c.clip_len, &c.fc1_dim, &c.conv1_dim, &c.conv2_dim,
                     &c.fc2_dim, &c.num_classes, &c.kernel_size})
        *v = static_cast<Index>(io::read_u32(is, what));
    c.dropout = io::read_f64(is, what);
    c.lambda = io::read_f64(is, what);
    const auto flags = io::read_u32(is, what);
    c.activations = (flags & 1u) != 0;
    c.fc2_activation = (flags & 2u) != 0;
    try {
        c.validate();
    } catch (const Error& e) {
        detail::raise(ErrorKind::Format, what, ": invalid config block: ", e.what());
    }

    const auto count = io::read_u32(is, what);
    RMSNET_REQUIRE(count == kParamNames.size(), Format, what, ": expected ", kParamNames.size(),
                   " tensors, found ", count);
    ck.params = RmsNetParams<float>::zeros(c);
    ck.params.for_each([&](std::string_view name, MatrixF& m) {
        const auto rows = io::read_u32(is, what);
        const auto cols = io::read_u32(is, what);
        RMSNET_REQUIRE(rows == m.rows() && cols == m.cols(), Format, what, ": tensor ", name,
                       " is ", rows, "x", cols, ", config implies ", m.rows(), "x", m.cols());
        io::read_floats(is, m.data(), static_cast<std::size_t>(m.size()), what);
        RMSNET_REQUIRE(m.allFinite(), Format, what, ": tensor ", name, " has non-finite values");
    });
    return ck;
}

} // namespace rmsnet
