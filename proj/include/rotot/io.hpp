#pragma once

#include <string>
#include <vector>

#include "rotot/tensor.hpp"

namespace rotot {

// Single-tensor container ".ten":
//   magic "TEN1" | u8 order (>=1) | order x u32 mode sizes (LE)
//   | prod(sizes) x f64 values (LE), first mode fastest.
// NaN payloads encode missing cells; round-trips of files written here are
// bit-exact. Throws FileFormatError on malformed input.
void write_ten(const std::string& path, const Tensor& t);
Tensor read_ten(const std::string& path);

// Case-stack container ".tens": one shared shape header, then the payloads of
// all cases back to back.
//   magic "TENS" | u32 case count | u8 order | order x u32 mode sizes
//   | count x prod(sizes) x f64 values.
void write_tens(const std::string& path, const std::vector<Tensor>& cases);
std::vector<Tensor> read_tens(const std::string& path);

}  // namespace rotot
