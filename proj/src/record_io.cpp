#include "ppgfusion/record_io.hpp"

#include "ppgfusion/unet.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ppgfusion {

namespace {

constexpr std::array<char, 4> kRecordMagic{'P', 'P', 'G', 'F'};
constexpr std::array<char, 4> kCheckpointMagic{'P', 'P', 'G', 'M'};

class Writer {
 public:
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void tag(const std::array<char, 4>& t) { bytes_.insert(bytes_.end(), t.begin(), t.end()); }
  void str16(const std::string& s) {
    if (s.size() > 0xffff) throw InvalidInput("string too long for the file format");
    uint(static_cast<std::uint16_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(const std::vector<std::uint8_t>& b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }

  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
  explicit Reader(const std::vector<std::uint8_t>& b) : Reader(b.data(), b.size()) {}

  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::array<char, 4> tag() {
    need(4);
    std::array<char, 4> t{};
    std::memcpy(t.data(), data_ + pos_, 4);
    pos_ += 4;
    return t;
  }
  std::string str16() {
    const auto n = uint<std::uint16_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<std::uint8_t> raw(std::uint64_t n) {
    need(n);
    std::vector<std::uint8_t> b(data_ + pos_, data_ + pos_ + n);
    pos_ += n;
    return b;
  }
  /// Element count whose payload of `elem` bytes each must fit in the rest.
  std::uint64_t count(std::size_t elem) {
    const auto n = uint<std::uint64_t>();
    if (elem > 0 && n > remaining() / elem) throw FormatError("declared count exceeds the payload");
    return n;
  }
  std::size_t remaining() const { return size_ - pos_; }
  bool done() const { return pos_ == size_; }

 private:
  void need(std::uint64_t n) const {
    if (n > size_ - pos_) throw FormatError("unexpected end of data");
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::array<char, 4> make_tag(const char (&t)[5]) { return {t[0], t[1], t[2], t[3]}; }

std::vector<double> read_times(Reader& r) {
  const auto n = r.count(8);
  std::vector<double> t(n);
  for (auto& v : t) v = r.f64();
  return t;
}

void write_times(Writer& w, const std::vector<double>& t) {
  w.uint(static_cast<std::uint64_t>(t.size()));
  for (double v : t) w.f64(v);
}

const Eigen::VectorXf& channel_named(const RecordFile& f, const std::string& name) {
  for (std::size_t i = 0; i < f.channel_names.size(); ++i)
    if (f.channel_names[i] == name) return f.channels[i];
  throw FormatError("record file has no channel '" + name + "'");
}

}  // namespace

const RecordBlock* RecordFile::find_block(const char (&t)[5]) const {
  const auto want = make_tag(t);
  for (const RecordBlock& b : blocks)
    if (b.tag == want) return &b;
  return nullptr;
}

std::vector<std::uint8_t> encode_record_file(const RecordFile& file) {
  if (file.channels.size() != file.channel_names.size())
    throw InvalidInput("channel names and channels differ in count");
  if (file.channels.empty() || file.channels.size() > 0xffff) throw InvalidInput("bad channel count");
  const Index n = file.channels.front().size();
  for (const auto& c : file.channels)
    if (c.size() != n) throw InvalidInput("channels differ in length");

  Writer w;
  w.tag(kRecordMagic);
  w.uint(kRecordVersion);
  w.uint(static_cast<std::uint16_t>(file.channels.size()));
  w.f64(file.fs);
  w.uint(static_cast<std::uint64_t>(n));
  w.str16(file.subject_id);
  for (const auto& name : file.channel_names) w.str16(name);
  for (const auto& c : file.channels)
    for (Index i = 0; i < n; ++i) w.f32(c[i]);
  for (const RecordBlock& b : file.blocks) {
    w.tag(b.tag);
    w.uint(static_cast<std::uint64_t>(b.payload.size()));
    w.raw(b.payload);
  }
  return std::move(w.bytes());
}

RecordFile decode_record_file(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.tag() != kRecordMagic) throw FormatError("not a record file (bad magic)");
  const auto version = r.uint<std::uint16_t>();
  if (version != kRecordVersion) throw FormatError("unsupported record version " + std::to_string(version));
  RecordFile f;
  const auto n_channels = r.uint<std::uint16_t>();
  f.fs = r.f64();
  if (!(f.fs > 0.0)) throw FormatError("record sampling rate must be positive");
  const auto n = r.uint<std::uint64_t>();
  f.subject_id = r.str16();
  for (int c = 0; c < n_channels; ++c) f.channel_names.push_back(r.str16());
  if (n_channels > 0 && n > r.remaining() / 4 / n_channels)
    throw FormatError("declared sample count exceeds the payload");
  for (int c = 0; c < n_channels; ++c) {
    Eigen::VectorXf x(static_cast<Index>(n));
    for (auto& v : x) v = r.f32();
    f.channels.push_back(std::move(x));
  }
  while (!r.done()) {
    RecordBlock b;
    b.tag = r.tag();
    b.payload = r.raw(r.uint<std::uint64_t>());
    f.blocks.push_back(std::move(b));
  }
  return f;
}

RecordFile to_record_file(const MultiChannelRecord& record) {
  record.validate();
  RecordFile f;
  f.subject_id = record.subject_id;
  f.fs = record.fs();
  f.channel_names = {"green", "red", "ir", "ecg"};
  for (const TimeSeries* s : {&record.green, &record.red, &record.ir, &record.ecg})
    f.channels.push_back(s->samples.cast<float>());
  if (record.truth) {
    Writer w;
    write_times(w, record.truth->r_peak_times);
    w.uint(static_cast<std::uint64_t>(record.truth->clean_ppg.size()));
    for (double v : record.truth->clean_ppg) w.f32(static_cast<float>(v));
    f.blocks.push_back({make_tag("GTRU"), std::move(w.bytes())});
  }
  return f;
}

MultiChannelRecord from_record_file(const RecordFile& f) {
  MultiChannelRecord rec;
  rec.subject_id = f.subject_id;
  auto series = [&](const char* name) {
    return TimeSeries(channel_named(f, name).cast<double>(), f.fs, 0.0);
  };
  rec.green = series("green");
  rec.red = series("red");
  rec.ir = series("ir");
  rec.ecg = series("ecg");
  if (const RecordBlock* b = f.find_block("GTRU")) {
    Reader r(b->payload);
    GroundTruth gt;
    gt.r_peak_times = read_times(r);
    const auto n = r.count(4);
    gt.clean_ppg.resize(static_cast<Index>(n));
    for (auto& v : gt.clean_ppg) v = r.f32();
    rec.truth = std::move(gt);
  }
  return rec;
}

RecordFile to_reference_file(const std::string& subject_id, const PreparedReference& ref) {
  RecordFile f;
  f.subject_id = subject_id;
  f.fs = ref.reference.signal.fs;
  f.channel_names = {"reference"};
  f.channels.push_back(ref.reference.signal.samples.cast<float>());
  Writer span;
  span.uint(static_cast<std::uint64_t>(ref.reference.begin));
  span.uint(static_cast<std::uint64_t>(ref.reference.end));
  f.blocks.push_back({make_tag("RSPN"), std::move(span.bytes())});
  Writer peaks;
  write_times(peaks, ref.beats.r_peak_times);
  f.blocks.push_back({make_tag("RPKS"), std::move(peaks.bytes())});
  return f;
}

PreparedReference from_reference_file(const RecordFile& f) {
  PreparedReference ref;
  ref.reference.signal = TimeSeries(channel_named(f, "reference").cast<double>(), f.fs, 0.0);
  const RecordBlock* span = f.find_block("RSPN");
  const RecordBlock* peaks = f.find_block("RPKS");
  if (!span || !peaks) throw FormatError("reference file lacks its span or R-peak block");
  Reader rs(span->payload);
  ref.reference.begin = static_cast<Index>(rs.uint<std::uint64_t>());
  ref.reference.end = static_cast<Index>(rs.uint<std::uint64_t>());
  if (ref.reference.begin > ref.reference.end || ref.reference.end > ref.reference.signal.size())
    throw FormatError("reference span outside the signal");
  Reader rp(peaks->payload);
  ref.beats.r_peak_times = read_times(rp);
  return ref;
}

RecordFile to_series_file(const std::string& subject_id, const std::string& channel,
                          const TimeSeries& series) {
  RecordFile f;
  f.subject_id = subject_id;
  f.fs = series.fs;
  f.channel_names = {channel};
  f.channels.push_back(series.samples.cast<float>());
  return f;
}

TimeSeries from_series_file(const RecordFile& f) {
  if (f.channels.size() != 1) throw FormatError("expected a single-channel file");
  return TimeSeries(f.channels.front().cast<double>(), f.fs, 0.0);
}

std::vector<std::uint8_t> encode_checkpoint(const FusionModel<float>& model) {
  const UNetLayout layout(model.config);
  if (model.params.size() != layout.parameter_count())
    throw InvalidInput("parameter count does not match the configuration");
  const UNetConfig& c = model.config;
  const TrainingMetadata& m = model.meta;
  Writer w;
  w.tag(kCheckpointMagic);
  w.uint(kCheckpointVersion);
  for (int v : {c.in_channels, c.depth, c.base_channels, c.kernel_down, c.kernel_up})
    w.uint(static_cast<std::uint32_t>(v));
  w.uint(static_cast<std::uint64_t>(c.window_len));
  w.f64(c.leaky_slope);
  w.uint(static_cast<std::uint32_t>(m.best_epoch));
  w.uint(static_cast<std::uint32_t>(m.epochs_run));
  w.f64(m.best_val_l1);
  w.f64(m.learning_rate);
  w.uint(m.seed);
  for (const auto* ids : {&m.train_subjects, &m.val_subjects}) {
    w.uint(static_cast<std::uint32_t>(ids->size()));
    for (const auto& id : *ids) w.str16(id);
  }
  w.uint(static_cast<std::uint32_t>(layout.tensors().size()));
  for (const TensorSpec& t : layout.tensors()) {
    w.str16(t.name);
    w.uint(static_cast<std::uint32_t>(t.shape.size()));
    for (Index d : t.shape) w.uint(static_cast<std::uint64_t>(d));
    for (Index i = 0; i < t.size(); ++i) w.f32(model.params[t.offset + i]);
  }
  return std::move(w.bytes());
}

FusionModel<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.tag() != kCheckpointMagic) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  FusionModel<float> model;
  UNetConfig& c = model.config;
  for (int* v : {&c.in_channels, &c.depth, &c.base_channels, &c.kernel_down, &c.kernel_up})
    *v = static_cast<int>(r.uint<std::uint32_t>());
  c.window_len = static_cast<Index>(r.uint<std::uint64_t>());
  c.leaky_slope = r.f64();
  try {
    c.validate();
  } catch (const InvalidConfig& e) {
    throw FormatError(std::string("checkpoint configuration: ") + e.what());
  }
  TrainingMetadata& m = model.meta;
  m.best_epoch = static_cast<int>(r.uint<std::uint32_t>());
  m.epochs_run = static_cast<int>(r.uint<std::uint32_t>());
  m.best_val_l1 = r.f64();
  m.learning_rate = r.f64();
  m.seed = r.uint<std::uint64_t>();
  for (auto* ids : {&m.train_subjects, &m.val_subjects}) {
    const auto n = r.uint<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) ids->push_back(r.str16());
  }

  const UNetLayout layout(c);
  const auto n_tensors = r.uint<std::uint32_t>();
  if (n_tensors != layout.tensors().size()) throw FormatError("checkpoint tensor count disagrees with its configuration");
  model.params.setZero(layout.parameter_count());
  for (const TensorSpec& t : layout.tensors()) {
    if (r.str16() != t.name) throw FormatError("unexpected tensor, wanted '" + t.name + "'");
    const auto ndim = r.uint<std::uint32_t>();
    std::vector<Index> shape;
    for (std::uint32_t i = 0; i < ndim; ++i) shape.push_back(static_cast<Index>(r.uint<std::uint64_t>()));
    if (shape != t.shape) throw FormatError("tensor '" + t.name + "' has the wrong shape");
    for (Index i = 0; i < t.size(); ++i) model.params[t.offset + i] = r.f32();
  }
  if (!r.done()) throw FormatError("trailing bytes after the last tensor");
  return model;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InvalidInput("cannot write " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw InvalidInput("cannot write " + path.string());
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string read_text(const std::filesystem::path& path) {
  const auto b = read_file(path);
  return {b.begin(), b.end()};
}

void save_record(const std::filesystem::path& path, const MultiChannelRecord& record) {
  write_file_atomic(path, encode_record_file(to_record_file(record)));
}

MultiChannelRecord load_record(const std::filesystem::path& path) {
  return from_record_file(decode_record_file(read_file(path)));
}

void save_checkpoint(const std::filesystem::path& path, const FusionModel<float>& model) {
  write_file_atomic(path, encode_checkpoint(model));
}

FusionModel<float> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

std::string manifest_to_text(const std::vector<ManifestEntry>& entries) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "subject\tfile\tsamples\tfs\n";
  for (const ManifestEntry& e : entries)
    os << e.subject_id << "\t" << e.file << "\t" << e.samples << "\t" << e.fs << "\n";
  return os.str();
}

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "subject\tfile\tsamples\tfs")
    throw FormatError("manifest header missing");
  std::vector<ManifestEntry> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    ManifestEntry e;
    std::string samples, fs;
    if (!std::getline(fields, e.subject_id, '\t') || !std::getline(fields, e.file, '\t') ||
        !std::getline(fields, samples, '\t') || !std::getline(fields, fs, '\t'))
      throw FormatError("malformed manifest line: " + line);
    try {
      e.samples = std::stoll(samples);
      e.fs = std::stod(fs);
    } catch (const std::exception&) {
      throw FormatError("malformed manifest line: " + line);
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::string history_to_text(const TrainingHistory& history) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "epoch\ttrain_l1\tval_l1\tlearning_rate\timproved\tlr_reduced\n";
  for (const EpochRecord& e : history.epochs)
    os << e.epoch << "\t" << e.train_l1 << "\t" << e.val_l1 << "\t" << e.learning_rate << "\t"
       << e.improved << "\t" << e.lr_reduced << "\n";
  return os.str();
}

}  // namespace ppgfusion
