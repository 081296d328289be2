/**
 * PNG loading and the crop/flip augmentation used for fine-tuning.
 *
 * Photos are resized so the short side matches the network input, then
 * square crops are taken: the center crop for inference, four corners plus
 * center (and their horizontal mirrors) for augmented training.
 */

import { readFileSync } from 'fs'
import { PNG } from 'pngjs'

export interface Raster {
  width: number
  height: number
  /** RGB float32 in [0,1], row-major, 3 channels interleaved */
  data: Float32Array
}

export function loadPng(path: string): Raster {
  const png = PNG.sync.read(readFileSync(path))
  const data = new Float32Array(png.width * png.height * 3)
  for (let i = 0; i < png.width * png.height; i++) {
    data[i * 3] = png.data[i * 4] / 255
    data[i * 3 + 1] = png.data[i * 4 + 1] / 255
    data[i * 3 + 2] = png.data[i * 4 + 2] / 255
  }
  return { width: png.width, height: png.height, data }
}

/** Bilinear resize so the smaller dimension equals `shortSide`. */
export function resizeShortSide(img: Raster, shortSide: number): Raster {
  const scale = shortSide / Math.min(img.width, img.height)
  const outW = Math.max(shortSide, Math.round(img.width * scale))
  const outH = Math.max(shortSide, Math.round(img.height * scale))
  const out = new Float32Array(outW * outH * 3)
  for (let y = 0; y < outH; y++) {
    const sy = Math.min((y + 0.5) / scale - 0.5, img.height - 1)
    const y0 = Math.max(0, Math.floor(sy))
    const y1 = Math.min(img.height - 1, y0 + 1)
    const fy = sy - y0
    for (let x = 0; x < outW; x++) {
      const sx = Math.min((x + 0.5) / scale - 0.5, img.width - 1)
      const x0 = Math.max(0, Math.floor(sx))
      const x1 = Math.min(img.width - 1, x0 + 1)
      const fx = sx - x0
      for (let c = 0; c < 3; c++) {
        const v00 = img.data[(y0 * img.width + x0) * 3 + c]
        const v01 = img.data[(y0 * img.width + x1) * 3 + c]
        const v10 = img.data[(y1 * img.width + x0) * 3 + c]
        const v11 = img.data[(y1 * img.width + x1) * 3 + c]
        out[(y * outW + x) * 3 + c] =
          v00 * (1 - fy) * (1 - fx) +
          v01 * (1 - fy) * fx +
          v10 * fy * (1 - fx) +
          v11 * fy * fx
      }
    }
  }
  return { width: outW, height: outH, data: out }
}

export function crop(img: Raster, left: number, top: number, size: number): Raster {
  const out = new Float32Array(size * size * 3)
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      for (let c = 0; c < 3; c++) {
        out[(y * size + x) * 3 + c] = img.data[((top + y) * img.width + left + x) * 3 + c]
      }
    }
  }
  return { width: size, height: size, data: out }
}

export function mirror(img: Raster): Raster {
  const out = new Float32Array(img.data.length)
  for (let y = 0; y < img.height; y++) {
    for (let x = 0; x < img.width; x++) {
      for (let c = 0; c < 3; c++) {
        out[(y * img.width + x) * 3 + c] =
          img.data[(y * img.width + (img.width - 1 - x)) * 3 + c]
      }
    }
  }
  return { width: img.width, height: img.height, data: out }
}

export function centerCrop(img: Raster, size: number): Raster {
  const resized = resizeShortSide(img, size)
  const left = Math.floor((resized.width - size) / 2)
  const top = Math.floor((resized.height - size) / 2)
  return crop(resized, left, top, size)
}

/** Four corners + center, each with its horizontal mirror: 10 crops. */
export function augmentedCrops(img: Raster, size: number): Raster[] {
  const resized = resizeShortSide(img, size)
  const maxLeft = resized.width - size
  const maxTop = resized.height - size
  const anchors: Array<[number, number]> = [
    [0, 0],
    [maxLeft, 0],
    [0, maxTop],
    [maxLeft, maxTop],
    [Math.floor(maxLeft / 2), Math.floor(maxTop / 2)],
  ]
  const crops = anchors.map(([l, t]) => crop(resized, l, t, size))
  return crops.concat(crops.map(mirror))
}
