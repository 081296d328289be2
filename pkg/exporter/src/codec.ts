/**
 * MQLF feature-file codec (little-endian).
 *
 * Layout: magic "MQLF", u32 version = 1, u32 count, u32 dimension,
 * count*dimension float32 values row-major, then one (u16 length, UTF-8
 * bytes) photo-id record per row. An optional "MQCH" + 16-char config-hash
 * trailer may follow; readers must tolerate its absence.
 */

export const MAGIC = 'MQLF'
export const HASH_MAGIC = 'MQCH'
export const CODEC_VERSION = 1

export interface FeatureFile {
  photoIds: string[]
  values: Float32Array // count * dimension, row-major
  dimension: number
  configHash?: string
}

export function encodeFeatures(file: FeatureFile): Buffer {
  const { photoIds, values, dimension } = file
  const count = photoIds.length
  if (values.length !== count * dimension) {
    throw new Error(
      `value buffer holds ${values.length} floats, expected ${count * dimension}`,
    )
  }
  const idBuffers = photoIds.map(id => {
    const raw = Buffer.from(id, 'utf8')
    if (raw.length > 0xffff) throw new Error(`photo id too long: ${id.slice(0, 32)}`)
    const rec = Buffer.alloc(2 + raw.length)
    rec.writeUInt16LE(raw.length, 0)
    raw.copy(rec, 2)
    return rec
  })
  const header = Buffer.alloc(16)
  header.write(MAGIC, 0, 'ascii')
  header.writeUInt32LE(CODEC_VERSION, 4)
  header.writeUInt32LE(count, 8)
  header.writeUInt32LE(dimension, 12)
  const payload = Buffer.from(values.buffer, values.byteOffset, values.byteLength)
  const parts = [header, Buffer.from(payload), ...idBuffers]
  if (file.configHash !== undefined) {
    const trailer = Buffer.alloc(20)
    trailer.write(HASH_MAGIC, 0, 'ascii')
    trailer.write(file.configHash.slice(0, 16).padEnd(16, '0'), 4, 'ascii')
    parts.push(trailer)
  }
  return Buffer.concat(parts)
}

export function decodeFeatures(buf: Buffer): FeatureFile {
  if (buf.subarray(0, 4).toString('ascii') !== MAGIC) {
    throw new Error(`bad magic ${buf.subarray(0, 4).toString('ascii')}`)
  }
  const version = buf.readUInt32LE(4)
  if (version !== CODEC_VERSION) throw new Error(`unsupported version ${version}`)
  const count = buf.readUInt32LE(8)
  const dimension = buf.readUInt32LE(12)
  let offset = 16
  const byteLen = count * dimension * 4
  if (buf.length < offset + byteLen) throw new Error('truncated value payload')
  const values = new Float32Array(count * dimension)
  for (let i = 0; i < values.length; i++) {
    values[i] = buf.readFloatLE(offset + i * 4)
  }
  offset += byteLen
  const photoIds: string[] = []
  for (let i = 0; i < count; i++) {
    if (buf.length < offset + 2) throw new Error('truncated id record')
    const len = buf.readUInt16LE(offset)
    offset += 2
    if (buf.length < offset + len) throw new Error('truncated id bytes')
    photoIds.push(buf.subarray(offset, offset + len).toString('utf8'))
    offset += len
  }
  let configHash: string | undefined
  if (
    buf.length >= offset + 20 &&
    buf.subarray(offset, offset + 4).toString('ascii') === HASH_MAGIC
  ) {
    configHash = buf.subarray(offset + 4, offset + 20).toString('ascii')
  }
  return { photoIds, values, dimension, configHash }
}
