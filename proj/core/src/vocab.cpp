#include "alcr/vocab.hpp"

#include <stdexcept>

namespace alcr {

Vocabulary::Vocabulary(std::string letters) : letters_(std::move(letters)) {
  if (letters_.empty())
    throw std::invalid_argument("Vocabulary: letters must be non-empty");
  for (int& v : index_) v = -1;
  for (int i = 0; i < num_letters(); ++i) {
    unsigned char c = static_cast<unsigned char>(letters_[static_cast<std::size_t>(i)]);
    if (index_[c] != -1)
      throw std::invalid_argument("Vocabulary: duplicate letter in inventory");
    index_[c] = i;
  }
}

bool Vocabulary::knows(char c) const {
  return index_[static_cast<unsigned char>(c)] >= 0;
}

int Vocabulary::id_of(char c) const {
  int id = index_[static_cast<unsigned char>(c)];
  if (id < 0)
    throw std::invalid_argument(std::string("Vocabulary: unknown letter '") + c + "'");
  return id;
}

char Vocabulary::letter_of(int id) const {
  if (id < 0 || id >= num_letters())
    throw std::invalid_argument("Vocabulary: id out of letter range: " +
                                std::to_string(id));
  return letters_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(id_of(c));
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string text;
  text.reserve(ids.size());
  for (int id : ids) text.push_back(letter_of(id));
  return text;
}

}  // namespace alcr
