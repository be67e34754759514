#include "usdiff/models/classifier.hpp"

#include <stdexcept>

namespace usdiff::models {

using nn::Tensor;

void ClassifierConfig::validate() const {
  if (channels.empty()) throw std::invalid_argument("classifier.channels: must not be empty");
  for (int c : channels)
    if (c < 8 || c % 8 != 0)
      throw std::invalid_argument("classifier.channels: entries must be multiples of 8");
  if (num_classes < 2) throw std::invalid_argument("classifier.num_classes: must be >= 2");
  if (image_size >> channels.size() < 1) {
    throw std::invalid_argument("classifier.image_size: too small for the block count");
  }
}

void to_json(nlohmann::json& j, const ClassifierConfig& c) {
  j = {{"image_size", c.image_size}, {"channels", c.channels}, {"num_classes", c.num_classes}};
}

void from_json(const nlohmann::json& j, ClassifierConfig& c) {
  ClassifierConfig d;
  c.image_size = j.value("image_size", d.image_size);
  c.channels = j.value("channels", d.channels);
  c.num_classes = j.value("num_classes", d.num_classes);
}

template <typename T>
Classifier<T>::Classifier(const ClassifierConfig& cfg, const Builder<T>& b) : cfg_(cfg) {
  cfg.validate();
  int ch = 1;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    auto sb = b.scope("block").scope(std::to_string(i));
    convs_.emplace_back(sb.scope("conv"), ch, cfg.channels[i], 3, 2);
    norms_.emplace_back(sb.scope("norm"), cfg.channels[i]);
    ch = cfg.channels[i];
  }
  head_ = Linear<T>(b.scope("head"), ch, cfg.num_classes);
}

template <typename T>
Tensor<T> Classifier<T>::operator()(const Tensor<T>& images) const {
  const nn::Shape want{images.ndim() == 4 ? images.dim(0) : -1, 1, cfg_.image_size,
                       cfg_.image_size};
  if (images.shape() != want) {
    throw nn::ShapeError("classifier: image shape " + nn::to_string(images.shape()) +
                         ", expected " + nn::to_string(want));
  }
  auto h = images;
  for (std::size_t i = 0; i < convs_.size(); ++i) h = nn::silu(norms_[i](convs_[i](h)));
  return head_(nn::global_avg_pool(h));
}

template class Classifier<float>;
template class Classifier<double>;

}  // namespace usdiff::models
