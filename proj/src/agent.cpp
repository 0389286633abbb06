#include "segilm/agent.hpp"

#include <fstream>
#include <string>

#include "segilm/binio.hpp"
#include "segilm/error.hpp"

namespace segilm {

namespace {

constexpr std::uint32_t kAgentMagic = 0x54474153;  // "SAGT"
constexpr std::uint32_t kAgentVersion = 1;

std::string describe(const std::vector<std::size_t>& sizes) {
  std::string s;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    s += (i ? "x" : "") + std::to_string(sizes[i]);
  }
  return s;
}

void expect_sizes(const net::Mlp& net, const std::vector<std::size_t>& sizes, const char* name) {
  if (net.layer_sizes() != sizes) {
    throw DimensionError(std::string(name) + " is " + describe(net.layer_sizes()) +
                         ", architecture says " + describe(sizes));
  }
}

}  // namespace

AgentArch AgentArch::symmetric(std::size_t n_latent, std::size_t hidden) {
  return {{glyph::kPixels, hidden, n_latent},
          {n_latent, n_latent, n_latent},
          {n_latent, n_latent, n_latent},
          {n_latent, hidden, glyph::kPixels}};
}

AgentArch AgentArch::with_word_encoder(std::vector<std::size_t> ew, std::size_t hidden) {
  if (ew.size() < 2) {
    throw InvalidArgument("word encoder needs at least two layer sizes");
  }
  std::vector<std::size_t> dw(ew.rbegin(), ew.rend());
  const std::size_t latent = ew.front();
  return {{glyph::kPixels, hidden, latent}, std::move(ew), std::move(dw),
          {latent, hidden, glyph::kPixels}};
}

void AgentArch::validate() const {
  for (const auto* sizes : {&ei_sizes, &ew_sizes, &dw_sizes, &di_sizes}) {
    if (sizes->size() < 2) {
      throw DimensionError("every sub-network needs at least two layer sizes");
    }
    for (auto s : *sizes) {
      if (s == 0) {
        throw DimensionError("layer sizes must be positive");
      }
    }
  }
  if (ei_sizes.front() != di_sizes.back()) {
    throw DimensionError("image encoder input and image decoder output differ");
  }
  if (ei_sizes.back() != ew_sizes.front()) {
    throw DimensionError("E_i output " + std::to_string(ei_sizes.back()) +
                         " does not match E_w input " + std::to_string(ew_sizes.front()));
  }
  if (ew_sizes.back() != dw_sizes.front()) {
    throw DimensionError("signal width " + std::to_string(ew_sizes.back()) +
                         " does not match D_w input " + std::to_string(dw_sizes.front()));
  }
  if (dw_sizes.back() != di_sizes.front()) {
    throw DimensionError("D_w output " + std::to_string(dw_sizes.back()) +
                         " does not match D_i input " + std::to_string(di_sizes.front()));
  }
  if (ei_sizes.back() != di_sizes.front()) {
    throw DimensionError("outer autoencoder needs E_i output == D_i input");
  }
}

Signal::Signal(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto b : bits_) {
    if (b > 1) {
      throw InvalidArgument("signal components must be 0 or 1");
    }
  }
}

Signal Signal::discretize(const net::Vector& latent) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(latent.size()));
  for (Eigen::Index i = 0; i < latent.size(); ++i) {
    bits[static_cast<std::size_t>(i)] = latent[i] > 0.5 ? 1 : 0;
  }
  return Signal(std::move(bits));
}

net::Vector Signal::to_vector() const {
  net::Vector v(static_cast<Eigen::Index>(bits_.size()));
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = bits_[i];
  }
  return v;
}

net::Vector to_vector(const glyph::Image& image) {
  return Eigen::Map<const Eigen::VectorXf>(image.data(), glyph::kPixels).cast<double>();
}

Agent Agent::naive(const AgentArch& arch, RandomStream& rng, net::InitScheme scheme) {
  arch.validate();
  auto ei = net::Mlp::init(arch.ei_sizes, rng, scheme);
  auto ew = net::Mlp::init(arch.ew_sizes, rng, scheme);
  auto dw = net::Mlp::init(arch.dw_sizes, rng, scheme);
  auto di = net::Mlp::init(arch.di_sizes, rng, scheme);
  return Agent(arch, std::move(ei), std::move(ew), std::move(dw), std::move(di));
}

Agent::Agent(AgentArch arch, net::Mlp ei, net::Mlp ew, net::Mlp dw, net::Mlp di)
    : arch_(std::move(arch)), ei_(std::move(ei)), ew_(std::move(ew)), dw_(std::move(dw)),
      di_(std::move(di)) {
  arch_.validate();
  expect_sizes(ei_, arch_.ei_sizes, "E_i");
  expect_sizes(ew_, arch_.ew_sizes, "E_w");
  expect_sizes(dw_, arch_.dw_sizes, "D_w");
  expect_sizes(di_, arch_.di_sizes, "D_i");
}

Signal Agent::encode(const net::Vector& image) const {
  return Signal::discretize(encode_latent(image));
}

net::Vector Agent::encode_latent(const net::Vector& image) const {
  return ew_.forward(ei_.forward(image));
}

net::Vector Agent::decode(const Signal& signal) const {
  if (signal.size() != arch_.signal_width()) {
    throw DimensionError("signal has width " + std::to_string(signal.size()) + ", expected " +
                         std::to_string(arch_.signal_width()));
  }
  return di_.forward(dw_.forward(signal.to_vector()));
}

net::Vector Agent::reconstruct_outer(const net::Vector& image) const {
  return di_.forward(ei_.forward(image));
}

double Agent::train_encoder_pair(const net::Vector& image, const Signal& signal,
                                 const net::TrainConfig& cfg) {
  net::Chain chain;
  chain.add(ei_).add(ew_);
  return net::train_step(chain, image, signal.to_vector(), cfg);
}

double Agent::train_decoder_pair(const Signal& signal, const net::Vector& image,
                                 const net::TrainConfig& cfg) {
  net::Chain chain;
  chain.add(dw_).add(di_);
  return net::train_step(chain, signal.to_vector(), image, cfg);
}

double Agent::train_outer(const net::Vector& image, const net::TrainConfig& cfg) {
  net::Chain chain;
  chain.add(ei_).add(di_);
  return net::train_step(chain, image, image, cfg);
}

double Agent::train_inner(const net::Vector& image, const net::TrainConfig& cfg) {
  const net::Vector latent = ei_.forward(image);
  net::Chain chain;
  chain.add(ew_).add(dw_);
  return net::train_step(chain, latent, latent, cfg);
}

void write_agent(std::ostream& out, const Agent& agent) {
  binio::Writer w(out);
  w.value(kAgentMagic);
  w.value(kAgentVersion);
  for (const auto* net : {&agent.image_encoder(), &agent.word_encoder(), &agent.word_decoder(),
                          &agent.image_decoder()}) {
    net::write_mlp(out, *net);
  }
}

Agent read_agent(std::istream& in) {
  binio::Reader r(in);
  if (r.value<std::uint32_t>() != kAgentMagic) {
    throw VersionError("not an agent snapshot (bad magic)");
  }
  if (const auto version = r.value<std::uint32_t>(); version != kAgentVersion) {
    throw VersionError("unsupported agent snapshot version " + std::to_string(version));
  }
  auto ei = net::read_mlp(in);
  auto ew = net::read_mlp(in);
  auto dw = net::read_mlp(in);
  auto di = net::read_mlp(in);
  AgentArch arch{ei.layer_sizes(), ew.layer_sizes(), dw.layer_sizes(), di.layer_sizes()};
  return Agent(std::move(arch), std::move(ei), std::move(ew), std::move(dw), std::move(di));
}

void save_agent(const Agent& agent, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  write_agent(out, agent);
}

Agent load_agent(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return read_agent(in);
}

}  // namespace segilm
