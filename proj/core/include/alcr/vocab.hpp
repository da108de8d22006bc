#pragma once

#include <string>
#include <vector>

namespace alcr {

/// Character inventory plus the three control symbols. Letter ids are the
/// positions in `letters`; EOS, SOS and PAD follow in that order, so the
/// predictable symbols (letters + EOS) form a contiguous id prefix.
class Vocabulary {
 public:
  explicit Vocabulary(std::string letters = "abcdefghijkl");

  int num_letters() const { return static_cast<int>(letters_.size()); }
  int total_symbols() const { return num_letters() + 3; }
  int eos() const { return num_letters(); }
  int sos() const { return num_letters() + 1; }
  int pad() const { return num_letters() + 2; }
  const std::string& letters() const { return letters_; }

  bool knows(char c) const;
  int id_of(char c) const;
  char letter_of(int id) const;

  std::vector<int> encode(const std::string& text) const;
  /// Inverse of encode; ids must all be letter ids.
  std::string decode(const std::vector<int>& ids) const;

 private:
  std::string letters_;
  int index_[256];
};

}  // namespace alcr
