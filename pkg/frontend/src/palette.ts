export interface ClassEntry {
  id: number;
  name: string;
  rgb: [number, number, number];
}

// 19-class face-parsing convention; index 0 is background.
export const CLASSES: ClassEntry[] = [
  { id: 0, name: "background", rgb: [0, 0, 0] },
  { id: 1, name: "skin", rgb: [204, 0, 0] },
  { id: 2, name: "nose", rgb: [76, 153, 0] },
  { id: 3, name: "eyeglasses", rgb: [204, 204, 0] },
  { id: 4, name: "left eye", rgb: [51, 51, 255] },
  { id: 5, name: "right eye", rgb: [204, 0, 204] },
  { id: 6, name: "left brow", rgb: [0, 255, 255] },
  { id: 7, name: "right brow", rgb: [255, 204, 204] },
  { id: 8, name: "left ear", rgb: [102, 51, 0] },
  { id: 9, name: "right ear", rgb: [255, 0, 0] },
  { id: 10, name: "mouth", rgb: [102, 204, 0] },
  { id: 11, name: "upper lip", rgb: [255, 255, 0] },
  { id: 12, name: "lower lip", rgb: [0, 0, 153] },
  { id: 13, name: "hair", rgb: [0, 0, 204] },
  { id: 14, name: "hat", rgb: [255, 51, 153] },
  { id: 15, name: "earring", rgb: [0, 204, 204] },
  { id: 16, name: "necklace", rgb: [0, 51, 0] },
  { id: 17, name: "neck", rgb: [255, 153, 51] },
  { id: 18, name: "cloth", rgb: [0, 204, 0] },
];

export const NUM_CLASSES = CLASSES.length;
