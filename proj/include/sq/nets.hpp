#ifndef SQ_NETS_HPP_
#define SQ_NETS_HPP_

#include <memory>
#include <string>

#include "sq/errors.hpp"
#include "sq/layers.hpp"
#include "sq/tensor.hpp"

namespace sq {

/// Architecture registry. Every conv and FC layer is quantizable,
/// including the first and last; biases and BatchNorm parameters are not.
inline Network make_network(const std::string& arch) {
  Network net;
  if (arch == "mnist_cnn") {
    // 1x28x28 -> 10 classes: 2 conv + 2 FC.
    net.add("conv1", std::make_unique<Conv2d>(1, 8, 3, 1, 1));
    net.add("relu1", std::make_unique<ReLU>());
    net.add("pool1", std::make_unique<MaxPool2d>(2));
    net.add("conv2", std::make_unique<Conv2d>(8, 16, 3, 1, 1));
    net.add("relu2", std::make_unique<ReLU>());
    net.add("pool2", std::make_unique<MaxPool2d>(2));
    net.add("flatten", std::make_unique<Flatten>());
    net.add("fc1", std::make_unique<Dense>(16 * 7 * 7, 64));
    net.add("relu3", std::make_unique<ReLU>());
    net.add("fc2", std::make_unique<Dense>(64, 10));
  } else if (arch == "cifar_cnn") {
    // 3x32x32 -> 10 classes, with batch normalization after each conv.
    net.add("conv1", std::make_unique<Conv2d>(3, 16, 3, 1, 1));
    net.add("bn1", std::make_unique<BatchNorm>(16));
    net.add("relu1", std::make_unique<ReLU>());
    net.add("pool1", std::make_unique<MaxPool2d>(2));
    net.add("conv2", std::make_unique<Conv2d>(16, 32, 3, 1, 1));
    net.add("bn2", std::make_unique<BatchNorm>(32));
    net.add("relu2", std::make_unique<ReLU>());
    net.add("pool2", std::make_unique<MaxPool2d>(2));
    net.add("flatten", std::make_unique<Flatten>());
    net.add("fc1", std::make_unique<Dense>(32 * 8 * 8, 64));
    net.add("relu3", std::make_unique<ReLU>());
    net.add("fc2", std::make_unique<Dense>(64, 10));
  } else {
    throw ArgumentError("unknown architecture '" + arch + "'");
  }
  return net;
}

inline Shape input_shape_for(const std::string& arch) {
  if (arch == "mnist_cnn") return {1, 28, 28};
  if (arch == "cifar_cnn") return {3, 32, 32};
  throw ArgumentError("unknown architecture '" + arch + "'");
}

inline std::string arch_for_dataset(const std::string& dataset) {
  if (dataset == "mnist" || dataset == "synthetic") return "mnist_cnn";
  if (dataset == "cifar10") return "cifar_cnn";
  throw ArgumentError("unknown dataset '" + dataset + "'");
}

}  // namespace sq

#endif  // SQ_NETS_HPP_
