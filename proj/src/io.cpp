#include "rotot/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "rotot/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor container code assumes a little-endian host");

namespace rotot {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4))
    throw FileFormatError("truncated file while reading " + what);
  return v;
}

void write_header(std::ostream& os, const Shape& s) {
  if (s.empty() || s.size() > 255)
    throw FileFormatError("tensor order must be between 1 and 255 for files");
  unsigned char order = static_cast<unsigned char>(s.size());
  os.write(reinterpret_cast<const char*>(&order), 1);
  for (int d : s) put_u32(os, static_cast<std::uint32_t>(d));
}

Shape read_header(std::istream& is, const std::string& path) {
  unsigned char order = 0;
  if (!is.read(reinterpret_cast<char*>(&order), 1))
    throw FileFormatError(path + ": truncated header");
  if (order == 0) throw FileFormatError(path + ": zero tensor order");
  Shape s(order);
  for (unsigned i = 0; i < order; ++i) {
    std::uint32_t d = get_u32(is, path + " mode size");
    if (d == 0) throw FileFormatError(path + ": zero mode size");
    s[i] = static_cast<int>(d);
  }
  return s;
}

void write_payload(std::ostream& os, const Tensor& t) {
  os.write(reinterpret_cast<const char*>(t.values().data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
}

std::vector<double> read_payload(std::istream& is, std::size_t n,
                                 const std::string& path) {
  std::vector<double> v(n);
  if (!is.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(n * sizeof(double))))
    throw FileFormatError(path + ": truncated payload");
  return v;
}

void check_magic(std::istream& is, const char* magic, const std::string& path) {
  char buf[4];
  if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
    throw FileFormatError(path + ": bad magic, expected " + magic);
}

}  // namespace

void write_ten(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileFormatError("cannot open " + path + " for writing");
  os.write("TEN1", 4);
  write_header(os, t.shape());
  write_payload(os, t);
  if (!os) throw FileFormatError("write failed for " + path);
}

Tensor read_ten(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileFormatError("cannot open " + path);
  check_magic(is, "TEN1", path);
  Shape s = read_header(is, path);
  std::vector<double> payload = read_payload(is, shape_size(s), path);
  is.peek();
  if (!is.eof()) throw FileFormatError(path + ": trailing bytes after payload");
  return Tensor::from_data(std::move(s), std::move(payload));
}

void write_tens(const std::string& path, const std::vector<Tensor>& cases) {
  if (cases.empty()) throw FileFormatError("write_tens: empty case stack");
  for (const Tensor& t : cases)
    if (!same_shape(t.shape(), cases[0].shape()))
      throw ShapeError("write_tens: cases disagree on shape");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileFormatError("cannot open " + path + " for writing");
  os.write("TENS", 4);
  put_u32(os, static_cast<std::uint32_t>(cases.size()));
  write_header(os, cases[0].shape());
  for (const Tensor& t : cases) write_payload(os, t);
  if (!os) throw FileFormatError("write failed for " + path);
}

std::vector<Tensor> read_tens(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileFormatError("cannot open " + path);
  check_magic(is, "TENS", path);
  std::uint32_t count = get_u32(is, path + " case count");
  if (count == 0) throw FileFormatError(path + ": zero cases");
  Shape s = read_header(is, path);
  std::size_t n = shape_size(s);
  std::vector<Tensor> cases;
  cases.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i)
    cases.push_back(Tensor::from_data(s, read_payload(is, n, path)));
  is.peek();
  if (!is.eof()) throw FileFormatError(path + ": trailing bytes after payload");
  return cases;
}

}  // namespace rotot
