from dataclasses import dataclass

from dataclasses_json import dataclass_json, Undefined

from netmeter.utils import Utils


@dataclass_json(undefined=Undefined.EXCLUDE)
@dataclass(frozen=True)
class BaseDataclassRecord:

	def load(self, skip_empty=True):
		record = self.to_dict(encode_json=True)
		return Utils.drop_empty(record) if skip_empty else record
