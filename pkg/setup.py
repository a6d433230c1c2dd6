from setuptools import setup, find_packages


def readme():
	with open('README.md') as md:
		return md.read()


def requirements():
	with open('requirements.txt') as requirements_file:
		return requirements_file.read().splitlines()

def version():
	with open('VERSION') as version_file:
		return version_file.read().strip()

setup(name='netmeter',
	description='wireless link measurement, channel simulation and trace analysis for mobile robots',
	python_requires='>=3.8',
	version=version(),
	long_description=readme(),
	long_description_content_type='text/markdown',
	license='BSD',
	packages=find_packages(exclude=['tests']),
	include_package_data=True,
	install_requires=requirements(),
	extras_require={'test': ['pytest', 'scipy']},
	entry_points={'console_scripts': ['netmeter = netmeter.cli:main']},
	zip_safe=False)
