#pragma once

// A language agent: image encoder E_i, word encoder E_w, word decoder D_w and
// image decoder D_i, trained in four configurations.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "segilm/glyphset.hpp"
#include "segilm/net.hpp"
#include "segilm/random.hpp"

namespace segilm {

struct AgentArch {
  std::vector<std::size_t> ei_sizes;
  std::vector<std::size_t> ew_sizes;
  std::vector<std::size_t> dw_sizes;
  std::vector<std::size_t> di_sizes;

  /// E_i 784 x 128 x n, E_w n x n x n, D_w n x n x n, D_i n x 128 x 784.
  static AgentArch symmetric(std::size_t n_latent, std::size_t hidden = 128);

  /// Word encoder with the given sizes (e.g. 20 x 18 x 15); the word decoder
  /// mirrors it and the image networks match its input width.
  static AgentArch with_word_encoder(std::vector<std::size_t> ew, std::size_t hidden = 128);

  /// Width of E_i's output (the latent fed to E_w).
  [[nodiscard]] std::size_t latent_width() const { return ei_sizes.back(); }
  /// Width of a signal (E_w's output).
  [[nodiscard]] std::size_t signal_width() const { return ew_sizes.back(); }

  /// Throws DimensionError unless the four networks chain together. Image
  /// width is checked by the simulation, not here.
  void validate() const;

  bool operator==(const AgentArch&) const = default;
};

class Signal {
 public:
  Signal() = default;
  explicit Signal(std::vector<std::uint8_t> bits);

  /// Threshold at 0.5; exactly 0.5 maps to 0.
  static Signal discretize(const net::Vector& latent);

  [[nodiscard]] std::size_t size() const { return bits_.size(); }
  [[nodiscard]] std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
  [[nodiscard]] const std::vector<std::uint8_t>& bits() const { return bits_; }
  [[nodiscard]] net::Vector to_vector() const;

  auto operator<=>(const Signal&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

net::Vector to_vector(const glyph::Image& image);

class Agent {
 public:
  /// Fresh network weights for all four parts.
  static Agent naive(const AgentArch& arch, RandomStream& rng,
                     net::InitScheme scheme = net::InitScheme::fan_in_uniform);

  /// Assembles an agent from existing networks; throws DimensionError if
  /// they do not match `arch`.
  Agent(AgentArch arch, net::Mlp ei, net::Mlp ew, net::Mlp dw, net::Mlp di);

  [[nodiscard]] const AgentArch& arch() const { return arch_; }
  [[nodiscard]] const net::Mlp& image_encoder() const { return ei_; }
  [[nodiscard]] const net::Mlp& word_encoder() const { return ew_; }
  [[nodiscard]] const net::Mlp& word_decoder() const { return dw_; }
  [[nodiscard]] const net::Mlp& image_decoder() const { return di_; }

  [[nodiscard]] Signal encode(const net::Vector& image) const;
  /// E_w(E_i(image)) without discretization.
  [[nodiscard]] net::Vector encode_latent(const net::Vector& image) const;
  [[nodiscard]] net::Vector decode(const Signal& signal) const;
  /// D_i(E_i(image)).
  [[nodiscard]] net::Vector reconstruct_outer(const net::Vector& image) const;

  /// E = [E_i, E_w] regressed onto the signal bits.
  double train_encoder_pair(const net::Vector& image, const Signal& signal,
                            const net::TrainConfig& cfg);
  /// D = [D_w, D_i] mapping the signal to the image.
  double train_decoder_pair(const Signal& signal, const net::Vector& image,
                            const net::TrainConfig& cfg);
  /// O = [E_i, D_i] reconstructing the image.
  double train_outer(const net::Vector& image, const net::TrainConfig& cfg);
  /// I = [E_w, D_w] reconstructing E_i(image); E_i is only evaluated.
  double train_inner(const net::Vector& image, const net::TrainConfig& cfg);

  bool operator==(const Agent&) const = default;

 private:
  AgentArch arch_;
  net::Mlp ei_;
  net::Mlp ew_;
  net::Mlp dw_;
  net::Mlp di_;
};

void write_agent(std::ostream& out, const Agent& agent);
Agent read_agent(std::istream& in);
void save_agent(const Agent& agent, const std::filesystem::path& path);
Agent load_agent(const std::filesystem::path& path);

}  // namespace segilm
