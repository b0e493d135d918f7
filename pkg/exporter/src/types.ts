/** One prediction as serialized on a log line (wire format, snake_case). */
export interface PredictionRecord {
  bbox: [number, number, number, number];
  category_id: number;
  score: number;
  probs?: number[];
}

/** One log line; every image gets exactly one per exported epoch. */
export interface LogLineRecord {
  epoch: number;
  image_id: number;
  predictions: PredictionRecord[];
  loss?: number;
}

/** One detection as handed over by the training loop (post-NMS). */
export interface Detection {
  /** Corners as [x1, y1, x2, y2] in image coordinates. */
  bbox: [number, number, number, number];
  categoryId: number;
  score: number;
  /** Per-class probability vector, if the detector head exposes one. */
  probs?: number[];
}

/** Inference output for one image at one epoch. */
export interface ImageResult {
  imageId: number;
  detections: Detection[];
  /** Per-image training loss, if tracked. */
  loss?: number;
}
